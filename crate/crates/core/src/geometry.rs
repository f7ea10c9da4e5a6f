//! Shared geometry: planar poses, twists, robot and camera parameters, grid
//! indexing and differential-drive kinematics.
//!
//! Grid convention used everywhere in the crate: cell `(col, row)` covers the
//! half-open square `[col, col + 1) x [row, row + 1)` in grid units, measured
//! from the origin corner of the grid. Cell `(0, 0)` sits at the origin.

use std::f64::consts::PI;

use thiserror::Error;

/// Below this angular rate the straight-line limit of the arc is used.
pub const OMEGA_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x:.4}, {y:.4}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell ({col}, {row}) lies outside the {cols}x{rows} grid")]
    CellOutOfBounds {
        col: i64,
        row: i64,
        cols: usize,
        rows: usize,
    },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Wrap an angle into `(-PI, PI]`.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid can return exactly 2*PI for tiny negative inputs
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Planar pose; `theta` is kept in `(-PI, PI]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Rigid-body composition `self ∘ other`: `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Map a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }

    /// Map a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// `a ∘ b`.
pub fn se2_compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.omega == 0.0
    }

    pub fn within_limits(&self, robot: &RobotParams) -> bool {
        self.v.abs() <= robot.v_max && self.omega.abs() <= robot.omega_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// Collision disc radius (m).
    pub radius: f64,
    /// Returns above this height are passed under (m).
    pub clearance_height: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            radius: 0.15,
            clearance_height: 0.30,
            v_max: 0.5,
            omega_max: 1.5,
            a_max: 1.0,
            alpha_max: 4.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let fields = [
            ("radius", self.radius),
            ("clearance_height", self.clearance_height),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("a_max", self.a_max),
            ("alpha_max", self.alpha_max),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::Invalid(format!(
                    "robot {name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Pinhole depth camera mounted on the robot, looking along the robot's +x
/// axis and pitched down by `pitch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub mount_height: f64,
    pub pitch: f64,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for CameraModel {
    /// 424x240 depth stream with a roughly 89 degree horizontal field of view.
    fn default() -> Self {
        Self {
            fx: 215.0,
            fy: 215.0,
            cx: 212.0,
            cy: 120.0,
            width: 424,
            height: 240,
            mount_height: 0.30,
            pitch: 0.35,
            min_depth: 0.2,
            max_depth: 5.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::Invalid(msg));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got {} {}", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be nonzero".into());
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy {} outside [0, {})", self.cy, self.height));
        }
        if !(self.min_depth > 0.0 && self.min_depth < self.max_depth && self.max_depth.is_finite()) {
            return bad(format!(
                "depth range must satisfy 0 < min < max, got [{}, {}]",
                self.min_depth, self.max_depth
            ));
        }
        if !(self.mount_height > 0.0 && self.mount_height.is_finite()) {
            return bad(format!("mount height must be positive, got {}", self.mount_height));
        }
        if !(self.pitch.abs() < PI / 2.0) {
            return bad(format!("pitch {} outside (-pi/2, pi/2)", self.pitch));
        }
        Ok(())
    }

    /// Downward slope of the ray through row `v`, per unit of optical-axis
    /// depth. Positive below the horizon row.
    #[inline]
    pub fn row_descent(&self, v: f64) -> f64 {
        let (s, c) = self.pitch.sin_cos();
        s + (v - self.cy) / self.fy * c
    }

    /// Image row at which rays run parallel to the floor.
    pub fn horizon_row(&self) -> f64 {
        self.cy - self.fy * self.pitch.tan()
    }

    /// Robot-frame direction of the ray through pixel `(u, v)`, scaled so the
    /// optical-axis component is one: a point at depth `z` sits at
    /// `camera_center + z * dir`.
    #[inline]
    pub fn ray_direction(&self, u: f64, v: f64) -> [f64; 3] {
        let (s, c) = self.pitch.sin_cos();
        let a = (u - self.cx) / self.fx;
        let b = (v - self.cy) / self.fy;
        [c - s * b, -a, -(s + c * b)]
    }

    /// Robot-frame point (x forward, y left, z up from the floor) seen at
    /// pixel `(u, v)` with depth `z`.
    #[inline]
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        let d = self.ray_direction(u, v);
        [z * d[0], z * d[1], self.mount_height + z * d[2]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Integer grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    /// Cell edge length (m).
    pub resolution: f64,
    /// World pose of the corner of cell (0, 0).
    pub origin: Pose2D,
    pub cols: usize,
    pub rows: usize,
}

impl GridGeometry {
    pub fn new(resolution: f64, origin: Pose2D, cols: usize, rows: usize) -> Result<Self, GeometryError> {
        let g = Self {
            resolution,
            origin,
            cols,
            rows,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(GeometryError::Invalid(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.cols == 0 || self.rows == 0 {
            return Err(GeometryError::Invalid("grid must have at least one cell".into()));
        }
        if !self.origin.is_finite() {
            return Err(GeometryError::Invalid("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index % self.cols, index / self.cols)
    }

    #[inline]
    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.cols && (row as usize) < self.rows
    }

    /// Continuous grid coordinates (in cells) of a world point.
    #[inline]
    pub fn world_to_grid_f(&self, x: f64, y: f64) -> (f64, f64) {
        let (lx, ly) = self.origin.inverse_transform_point(x, y);
        (lx / self.resolution, ly / self.resolution)
    }

    #[inline]
    pub fn world_to_grid(&self, x: f64, y: f64) -> Result<Cell, GeometryError> {
        let (gx, gy) = self.world_to_grid_f(x, y);
        let col = gx.floor();
        let row = gy.floor();
        if col.is_finite() && row.is_finite() && self.contains(col as i64, row as i64) {
            Ok(Cell::new(col as usize, row as usize))
        } else {
            Err(GeometryError::OutOfBounds { x, y })
        }
    }

    /// World coordinates of the center of `cell`.
    #[inline]
    pub fn grid_to_world(&self, col: usize, row: usize) -> Result<(f64, f64), GeometryError> {
        if col >= self.cols || row >= self.rows {
            return Err(GeometryError::CellOutOfBounds {
                col: col as i64,
                row: row as i64,
                cols: self.cols,
                rows: self.rows,
            });
        }
        Ok(self.cell_center(Cell::new(col, row)))
    }

    /// Center of a cell known to be inside the grid.
    #[inline]
    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        let lx = (cell.col as f64 + 0.5) * self.resolution;
        let ly = (cell.row as f64 + 0.5) * self.resolution;
        self.origin.transform_point(lx, ly)
    }
}

/// Free-function form of [`GridGeometry::world_to_grid`].
pub fn world_to_grid(g: &GridGeometry, x: f64, y: f64) -> Result<Cell, GeometryError> {
    g.world_to_grid(x, y)
}

/// Free-function form of [`GridGeometry::grid_to_world`].
pub fn grid_to_world(g: &GridGeometry, col: usize, row: usize) -> Result<(f64, f64), GeometryError> {
    g.grid_to_world(col, row)
}

/// Exact constant-twist integration of the unicycle model.
pub fn unicycle_step(p: &Pose2D, u: &Twist, dt: f64) -> Pose2D {
    let Twist { v, omega } = *u;
    if omega.abs() > OMEGA_EPSILON {
        let r = v / omega;
        let th1 = p.theta + omega * dt;
        Pose2D::new(
            p.x + r * (th1.sin() - p.theta.sin()),
            p.y - r * (th1.cos() - p.theta.cos()),
            th1,
        )
    } else {
        // straight-line limit; the heading still advances by the tiny rate
        let (s, c) = p.theta.sin_cos();
        Pose2D::new(p.x + v * dt * c, p.y + v * dt * s, p.theta + omega * dt)
    }
}
