//! Ground segmentation on raw depth images.
//!
//! Every pixel row of a pinhole camera at known height and pitch has a
//! closed-form expected floor depth. Comparing a measured depth against that
//! model gives the height of the observed point above the floor directly,
//! without building a point cloud. Pixels are then labelled by height and the
//! labelled pixels are binned into a robot-centric traversability grid.

use thiserror::Error;

use crate::geometry::{CameraModel, Cell, GridGeometry, Pose2D};
use crate::pnm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("frame is {frame_w}x{frame_h} but camera expects {cam_w}x{cam_h}")]
    DimensionMismatch {
        frame_w: usize,
        frame_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
}

/// Row-major metric depth image. Zero or non-finite samples are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub timestamp: f64,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            timestamp: 0.0,
        }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    /// Invalidate every sample outside the camera's working range.
    pub fn clip_to_range(&mut self, cam: &CameraModel) {
        for z in &mut self.depth {
            if !is_valid_depth(cam, *z) {
                *z = 0.0;
            }
        }
    }

    /// 16-bit PGM in millimetres; invalid samples are written as 0.
    pub fn to_pgm16_mm(&self) -> Vec<u8> {
        let mm: Vec<u16> = self
            .depth
            .iter()
            .map(|&z| {
                if z.is_finite() && z > 0.0 {
                    (z * 1000.0).round().min(65535.0) as u16
                } else {
                    0
                }
            })
            .collect();
        pnm::encode_pgm16(self.width, self.height, &mm)
    }
}

#[inline]
pub fn is_valid_depth(cam: &CameraModel, z: f64) -> bool {
    z.is_finite() && z > 0.0 && z >= cam.min_depth && z <= cam.max_depth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PixelClass {
    Ground,
    Obstacle,
    /// Above the robot's clearance height; the robot passes under it.
    Overhead,
    Unknown,
}

impl PixelClass {
    pub fn color(self) -> [u8; 3] {
        match self {
            PixelClass::Ground => [0, 200, 0],
            PixelClass::Obstacle => [220, 0, 0],
            PixelClass::Overhead => [0, 80, 255],
            PixelClass::Unknown => [0, 0, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelClassFrame {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<PixelClass>,
}

impl PixelClassFrame {
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> PixelClass {
        self.classes[v * self.width + u]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let rgb: Vec<[u8; 3]> = self.classes.iter().map(|c| c.color()).collect();
        pnm::encode_ppm(self.width, self.height, &rgb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams {
    /// Points within this height of the floor are ground (m).
    pub tau_ground: f64,
    /// Points higher than this are obstacles (m).
    pub tau_obstacle: f64,
    pub column_stride: usize,
    pub row_stride: usize,
    pub min_obstacle_hits: u32,
    /// Half-extent of the square traversability map (m).
    pub map_range: f64,
    pub map_resolution: f64,
    /// Points above this height are overhead structure (m).
    pub clearance_height: f64,
    /// Extend obstacle labels down vertical faces to the floor contact line.
    pub grow_obstacle_base: bool,
    /// Minimum height for a pixel to join an obstacle face from below (m).
    pub base_height_eps: f64,
    /// Maximum horizontal-range step between neighbouring face pixels (m).
    pub base_range_tol: f64,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            tau_ground: 0.04,
            tau_obstacle: 0.08,
            column_stride: 2,
            row_stride: 2,
            min_obstacle_hits: 2,
            map_range: 4.0,
            map_resolution: 0.05,
            clearance_height: 0.30,
            grow_obstacle_base: true,
            base_height_eps: 5e-4,
            base_range_tol: 0.05,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<(), SegError> {
        let bad = |m: String| Err(SegError::InvalidParams(m));
        if !(self.tau_ground > 0.0 && self.tau_ground <= self.tau_obstacle) {
            return bad(format!(
                "need 0 < tau_ground <= tau_obstacle, got {} / {}",
                self.tau_ground, self.tau_obstacle
            ));
        }
        if self.column_stride == 0 || self.row_stride == 0 {
            return bad("strides must be at least 1".into());
        }
        if !(self.map_range > 0.0 && self.map_resolution > 0.0 && self.map_resolution < self.map_range) {
            return bad(format!(
                "map range {} / resolution {} invalid",
                self.map_range, self.map_resolution
            ));
        }
        if !(self.clearance_height > self.tau_obstacle) {
            return bad("clearance height must exceed tau_obstacle".into());
        }
        Ok(())
    }
}

/// Expected depth of the floor along pixel row `v`, or `None` at and above
/// the horizon row.
pub fn expected_ground_depth(cam: &CameraModel, v: f64) -> Option<f64> {
    let descent = cam.row_descent(v);
    if descent > 0.0 {
        Some(cam.mount_height / descent)
    } else {
        None
    }
}

/// Height above the floor of the point seen at row `v` with depth `z`.
#[inline]
pub fn height_above_ground(cam: &CameraModel, v: f64, z: f64) -> f64 {
    cam.mount_height - z * cam.row_descent(v)
}

#[inline]
fn class_from_height(params: &SegParams, h: f64) -> PixelClass {
    if h.abs() <= params.tau_ground {
        PixelClass::Ground
    } else if h > params.clearance_height {
        PixelClass::Overhead
    } else if h > params.tau_obstacle {
        PixelClass::Obstacle
    } else {
        // between the thresholds, or below the floor
        PixelClass::Unknown
    }
}

/// Label one depth sample. Zero roll is assumed, so `u` does not enter.
pub fn classify_pixel(cam: &CameraModel, params: &SegParams, _u: f64, v: f64, z: f64) -> PixelClass {
    if !is_valid_depth(cam, z) {
        return PixelClass::Unknown;
    }
    class_from_height(params, height_above_ground(cam, v, z))
}

fn check_dims(frame: &DepthFrame, cam: &CameraModel) -> Result<(), SegError> {
    if frame.width != cam.width || frame.height != cam.height || frame.depth.len() != cam.pixel_count() {
        return Err(SegError::DimensionMismatch {
            frame_w: frame.width,
            frame_h: frame.height,
            cam_w: cam.width,
            cam_h: cam.height,
        });
    }
    Ok(())
}

/// Per-row and per-column constants of the back-projection.
struct RayTable {
    descent: Vec<f64>,
    forward: Vec<f64>,
    lateral: Vec<f64>,
}

impl RayTable {
    fn new(cam: &CameraModel) -> Self {
        let (s, c) = cam.pitch.sin_cos();
        let mut descent = Vec::with_capacity(cam.height);
        let mut forward = Vec::with_capacity(cam.height);
        for v in 0..cam.height {
            let b = (v as f64 - cam.cy) / cam.fy;
            descent.push(cam.row_descent(v as f64));
            forward.push(c - s * b);
        }
        let lateral = (0..cam.width).map(|u| -(u as f64 - cam.cx) / cam.fx).collect();
        Self {
            descent,
            forward,
            lateral,
        }
    }

    #[inline]
    fn ground_xy(&self, u: usize, v: usize, z: f64) -> (f64, f64) {
        (z * self.forward[v], z * self.lateral[u])
    }

    /// Horizontal range at which pixel (u, v) would see the floor.
    fn floor_range(&self, cam: &CameraModel, u: usize, v: usize) -> Option<f64> {
        (self.descent[v] > 0.0).then(|| cam.mount_height / self.descent[v] * self.forward[v].hypot(self.lateral[u]))
    }
}

/// Classify the sampled lattice of a depth frame; unsampled pixels stay
/// `Unknown`.
///
/// With `grow_obstacle_base` set, each sampled column is also walked top to
/// bottom: a pixel directly below an obstacle pixel that still sits above the
/// floor at (nearly) the same horizontal range belongs to the same vertical
/// face, so it is relabelled `Obstacle`. This recovers the strip of a face
/// just above the floor that the height test alone would call ground. A face
/// whose visible top is only in the unknown band (a column grazing a box
/// corner) marks what lies below it `Unknown` rather than ground, as does a
/// pair of raised samples whose range barely changes from one row to the
/// next.
pub fn segment(frame: &DepthFrame, cam: &CameraModel, params: &SegParams) -> Result<PixelClassFrame, SegError> {
    check_dims(frame, cam)?;
    let table = RayTable::new(cam);
    let mut classes = vec![PixelClass::Unknown; frame.depth.len()];
    let w = frame.width;

    for u in (0..w).step_by(params.column_stride) {
        let mut anchor: Option<(f64, PixelClass)> = None;
        // previous valid sample: index, row, range, height
        let mut prev: Option<(usize, usize, f64, f64)> = None;
        for v in (0..frame.height).step_by(params.row_stride) {
            let idx = v * w + u;
            let z = frame.depth[idx];
            if !is_valid_depth(cam, z) {
                anchor = None;
                prev = None;
                continue;
            }
            let h = cam.mount_height - z * table.descent[v];
            let mut class = class_from_height(params, h);
            if params.grow_obstacle_base {
                let (x, y) = table.ground_xy(u, v, z);
                let range = x.hypot(y);
                anchor = match (class, anchor) {
                    (PixelClass::Obstacle, _) => Some((range, PixelClass::Obstacle)),
                    (PixelClass::Overhead, _) => None,
                    (PixelClass::Ground | PixelClass::Unknown, Some((r0, face)))
                        if h > params.base_height_eps && (range - r0).abs() <= params.base_range_tol =>
                    {
                        if face == PixelClass::Obstacle {
                            class = PixelClass::Obstacle;
                        } else if class == PixelClass::Ground {
                            class = PixelClass::Unknown;
                        }
                        Some((range, face))
                    }
                    // the top of a face too low to call: whatever lies below it
                    // on the same face is not floor either
                    (PixelClass::Unknown, _) if h > params.tau_ground => Some((range, PixelClass::Unknown)),
                    _ => None,
                };
                // Two raised samples whose range shrinks far slower than the
                // floor's would are a low strip of wall, not floor.
                if let Some((pi, pv, pr, ph)) = prev {
                    if class == PixelClass::Ground && h > params.base_height_eps && ph > params.base_height_eps {
                        if let (Some(g0), Some(g1)) = (table.floor_range(cam, u, pv), table.floor_range(cam, u, v)) {
                            let step = pr - range;
                            if step >= -params.base_range_tol && step <= 0.5 * (g0 - g1) {
                                class = PixelClass::Unknown;
                                if classes[pi] == PixelClass::Ground {
                                    classes[pi] = PixelClass::Unknown;
                                }
                            }
                        }
                    }
                }
                prev = Some((idx, v, range, h));
            }
            classes[idx] = class;
        }
    }
    Ok(PixelClassFrame {
        width: frame.width,
        height: frame.height,
        classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TravCell {
    Traversable,
    Obstacle,
    Unknown,
}

impl TravCell {
    pub fn pgm_value(self) -> u8 {
        match self {
            TravCell::Traversable => 254,
            TravCell::Obstacle => 0,
            TravCell::Unknown => 205,
        }
    }

    #[inline]
    pub fn is_blocked(self) -> bool {
        !matches!(self, TravCell::Traversable)
    }
}

/// Robot-centric grid: x forward, y left, robot at the centre of the anchor
/// cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversabilityMap {
    pub geometry: GridGeometry,
    pub cells: Vec<TravCell>,
    pub anchor: Cell,
    pub timestamp: f64,
}

impl TraversabilityMap {
    /// Square map covering `[-range, range]` on both axes, every cell unknown.
    pub fn new(map_range: f64, resolution: f64) -> Self {
        let half = (map_range / resolution).round().max(1.0) as usize;
        let n = 2 * half + 1;
        let offset = -(half as f64 + 0.5) * resolution;
        let geometry = GridGeometry {
            resolution,
            origin: Pose2D::new(offset, offset, 0.0),
            cols: n,
            rows: n,
        };
        Self {
            geometry,
            cells: vec![TravCell::Unknown; n * n],
            anchor: Cell::new(half, half),
            timestamp: 0.0,
        }
    }

    pub fn filled(map_range: f64, resolution: f64, value: TravCell) -> Self {
        let mut m = Self::new(map_range, resolution);
        m.cells.fill(value);
        m
    }

    /// Half-extent actually covered (cell-aligned).
    pub fn range(&self) -> f64 {
        self.anchor.col as f64 * self.geometry.resolution
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> TravCell {
        self.cells[self.geometry.index(cell)]
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, value: TravCell) {
        let i = self.geometry.index(cell);
        self.cells[i] = value;
    }

    /// Cell containing the robot-frame point, if on the map.
    #[inline]
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        self.geometry.world_to_grid(x, y).ok()
    }

    /// Robot-frame coordinates of a cell centre.
    #[inline]
    pub fn center(&self, cell: Cell) -> (f64, f64) {
        self.geometry.cell_center(cell)
    }

    pub fn count(&self, value: TravCell) -> usize {
        self.cells.iter().filter(|&&c| c == value).count()
    }

    /// PGM with the top image row at the largest `y` (leftmost) and `x`
    /// increasing to the right.
    pub fn to_pgm(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut data = Vec::with_capacity(g.len());
        for img_row in 0..g.rows {
            let row = g.rows - 1 - img_row;
            for col in 0..g.cols {
                data.push(self.get(Cell::new(col, row)).pgm_value());
            }
        }
        pnm::encode_pgm8(g.cols, g.rows, &data)
    }
}

/// Back-project sampled ground and obstacle pixels into the robot-centric
/// grid. A cell becomes `Obstacle` once it holds `min_obstacle_hits` obstacle
/// pixels, otherwise `Traversable` if it holds any ground pixel.
pub fn project_to_traversability(
    classes: &PixelClassFrame,
    frame: &DepthFrame,
    cam: &CameraModel,
    params: &SegParams,
) -> TraversabilityMap {
    let mut map = TraversabilityMap::new(params.map_range, params.map_resolution);
    map.timestamp = frame.timestamp;
    if check_dims(frame, cam).is_err() || classes.width != frame.width || classes.height != frame.height {
        return map;
    }
    let table = RayTable::new(cam);
    let n = map.geometry.len();
    let mut obstacle_hits = vec![0u32; n];
    let mut ground_hits = vec![0u32; n];
    let w = frame.width;

    for v in (0..frame.height).step_by(params.row_stride) {
        for u in (0..w).step_by(params.column_stride) {
            let idx = v * w + u;
            let counter = match classes.classes[idx] {
                PixelClass::Ground => &mut ground_hits,
                PixelClass::Obstacle => &mut obstacle_hits,
                _ => continue,
            };
            let (x, y) = table.ground_xy(u, v, frame.depth[idx]);
            if let Some(cell) = map.cell_at(x, y) {
                counter[map.geometry.index(cell)] += 1;
            }
        }
    }

    let min_hits = params.min_obstacle_hits.max(1);
    for (i, cell) in map.cells.iter_mut().enumerate() {
        *cell = if obstacle_hits[i] >= min_hits {
            TravCell::Obstacle
        } else if ground_hits[i] > 0 {
            TravCell::Traversable
        } else {
            TravCell::Unknown
        };
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level_cam() -> CameraModel {
        CameraModel {
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
            mount_height: 0.5,
            pitch: 0.0,
            min_depth: 0.1,
            max_depth: 10.0,
        }
    }

    #[test]
    fn ground_depth_examples() {
        let cam = level_cam();
        assert!((expected_ground_depth(&cam, 240.0).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(expected_ground_depth(&cam, 120.0), None);
        assert_eq!(expected_ground_depth(&cam, 50.0), None);
        let tilted = CameraModel {
            pitch: 15f64.to_radians(),
            ..cam
        };
        assert!((expected_ground_depth(&tilted, 120.0).unwrap() - 1.93185).abs() < 1e-5);
    }

    #[test]
    fn height_examples() {
        let cam = level_cam();
        assert!(height_above_ground(&cam, 240.0, 1.25).abs() < 1e-12);
        assert!((height_above_ground(&cam, 240.0, 1.0) - 0.10).abs() < 1e-12);
        assert_eq!(height_above_ground(&cam, 120.0, 3.0), 0.5);
    }

    #[test]
    fn height_matches_back_projection() {
        // independent route: explicit 3D point from the ray direction
        let cam = CameraModel {
            pitch: 0.3,
            ..level_cam()
        };
        for &(u, v, z) in &[(10.0, 200.0, 1.3), (300.0, 140.0, 2.2), (160.0, 20.0, 0.7)] {
            let p = cam.back_project(u, v, z);
            assert!((p[2] - height_above_ground(&cam, v, z)).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_examples() {
        let cam = level_cam();
        let p = SegParams {
            clearance_height: 0.3,
            ..SegParams::default()
        };
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 1.25), PixelClass::Ground);
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 1.00), PixelClass::Obstacle);
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 0.0), PixelClass::Unknown);
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, f64::NAN), PixelClass::Unknown);
        // H = 0.06 sits in the band between the thresholds
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 1.10), PixelClass::Unknown);
        // below the floor
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 1.5), PixelClass::Unknown);
        // H = 0.5 - 0.3*0.4 = 0.38 > clearance
        assert_eq!(classify_pixel(&cam, &p, 10.0, 240.0, 0.3), PixelClass::Overhead);
    }

    #[test]
    fn height_strictly_decreasing_in_depth_below_horizon() {
        let cam = CameraModel::default();
        for v in [150.0, 200.0, 239.0] {
            let mut prev = f64::INFINITY;
            for i in 1..100 {
                let h = height_above_ground(&cam, v, i as f64 * 0.05);
                assert!(h < prev);
                prev = h;
            }
        }
    }

    #[test]
    fn invalid_frame_all_unknown() {
        let cam = CameraModel::default();
        let frame = DepthFrame::new(cam.width, cam.height);
        let classes = segment(&frame, &cam, &SegParams::default()).unwrap();
        assert!(classes.classes.iter().all(|&c| c == PixelClass::Unknown));
        let map = project_to_traversability(&classes, &frame, &cam, &SegParams::default());
        assert_eq!(map.count(TravCell::Unknown), map.cells.len());
    }

    #[test]
    fn dimension_mismatch() {
        let cam = CameraModel::default();
        let frame = DepthFrame::new(10, 10);
        assert!(matches!(
            segment(&frame, &cam, &SegParams::default()),
            Err(SegError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stray_obstacle_pixel_does_not_block_cell() {
        let cam = CameraModel::default();
        let params = SegParams {
            column_stride: 1,
            row_stride: 1,
            grow_obstacle_base: false,
            ..SegParams::default()
        };
        let mut frame = DepthFrame::new(cam.width, cam.height);
        for v in 0..cam.height {
            if let Some(d) = expected_ground_depth(&cam, v as f64) {
                for u in 0..cam.width {
                    frame.depth[v * cam.width + u] = d;
                }
            }
        }
        frame.clip_to_range(&cam);
        let (u, v) = (212usize, 200usize);
        let ground = frame.at(u, v);
        // pull one sample in so it reads as a 0.1 m tall point
        frame.depth[v * cam.width + u] = (cam.mount_height - 0.1) / cam.row_descent(v as f64);
        let classes = segment(&frame, &cam, &params).unwrap();
        assert_eq!(classes.at(u, v), PixelClass::Obstacle);
        let map = project_to_traversability(&classes, &frame, &cam, &params);
        let (x, y) = (ground * cam.ray_direction(u as f64, v as f64)[0], 0.0);
        let cell = map.cell_at(x, y).unwrap();
        assert_eq!(map.get(cell), TravCell::Traversable);
        assert_eq!(map.count(TravCell::Obstacle), 0);
    }

    #[test]
    fn map_layout_puts_robot_at_anchor_centre() {
        let map = TraversabilityMap::new(4.0, 0.05);
        assert_eq!(map.geometry.cols, 161);
        assert_eq!(map.anchor, Cell::new(80, 80));
        let (x, y) = map.center(map.anchor);
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
        let (x, _) = map.center(Cell::new(100, 80));
        assert!((x - 1.0).abs() < 1e-12);
        assert!((map.range() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_dump_values() {
        let mut map = TraversabilityMap::new(0.1, 0.05);
        map.set(Cell::new(0, 0), TravCell::Obstacle);
        map.set(Cell::new(1, 1), TravCell::Traversable);
        let img = pnm::decode_pgm(&map.to_pgm()).unwrap();
        // grid row 0 is the bottom image row
        assert_eq!(img.data[(img.height - 1) * img.width], 0);
        assert_eq!(img.data[(img.height - 2) * img.width + 1], 254);
        assert_eq!(img.data[0], 205);
    }
}
