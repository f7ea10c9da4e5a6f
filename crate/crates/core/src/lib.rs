//! Ground-segmentation navigation stack for a low-body differential-drive
//! robot with a forward RGB-D camera, plus the 2.5D simulator it is tested in.

pub mod geometry;
pub mod globalplanner;
pub mod groundseg;
pub mod localplanner;
pub mod mapping;
pub mod pnm;
pub mod policylearn;
pub mod runtime;
pub mod simenv;
