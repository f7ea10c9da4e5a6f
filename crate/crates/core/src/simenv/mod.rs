//! 2.5D simulated world: floor-standing boxes and cylinders, a ray-cast depth
//! camera with per-pixel surface labels, kinematic robot motion and
//! collision checks.

mod random;
mod scenario;

pub use random::{random_scenario, RandomScenarioConfig};
pub use scenario::{load_scenario, Scenario, ScenarioError};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{unicycle_step, CameraModel, Pose2D, RobotParams, Twist};
use crate::groundseg::{DepthFrame, PixelClass, PixelClassFrame, SegParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Axis-aligned box standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxObstacle {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height: f64,
    /// Present in the prior map handed to the planner.
    pub mapped: bool,
}

impl BoxObstacle {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, height: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
            height,
            mapped: true,
        }
    }

    /// Distance from a floor point to the footprint (0 inside).
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x_min - x).max(0.0).max(x - self.x_max);
        let dy = (self.y_min - y).max(0.0).max(y - self.y_max);
        dx.hypot(dy)
    }
}

/// Vertical cylinder standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub height: f64,
    pub mapped: bool,
}

impl Cylinder {
    pub fn new(cx: f64, cy: f64, radius: f64, height: f64) -> Self {
        Self {
            cx,
            cy,
            radius,
            height,
            mapped: true,
        }
    }

    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        ((x - self.cx).hypot(y - self.cy) - self.radius).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bounds: Bounds,
    pub boxes: Vec<BoxObstacle>,
    pub cylinders: Vec<Cylinder>,
}

impl Scene {
    pub fn empty(bounds: Bounds) -> Self {
        Self {
            bounds,
            boxes: Vec::new(),
            cylinders: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let b = &self.bounds;
        if !(b.x_min < b.x_max && b.y_min < b.y_max) || ![b.x_min, b.x_max, b.y_min, b.y_max].iter().all(|v| v.is_finite()) {
            return Err(format!("bounds must have positive extent, got {b:?}"));
        }
        for (i, o) in self.boxes.iter().enumerate() {
            if !(o.x_min < o.x_max && o.y_min < o.y_max && o.height > 0.0 && o.height.is_finite()) {
                return Err(format!("box {i} must have positive extent and height"));
            }
        }
        for (i, c) in self.cylinders.iter().enumerate() {
            if !(c.radius > 0.0 && c.height > 0.0 && c.radius.is_finite() && c.height.is_finite()) {
                return Err(format!("cylinder {i} must have positive radius and height"));
            }
        }
        Ok(())
    }

    /// Distance from a floor point to the nearest obstacle footprint.
    pub fn obstacle_distance(&self, x: f64, y: f64) -> f64 {
        let boxes = self.boxes.iter().map(|o| o.footprint_distance(x, y));
        let cyls = self.cylinders.iter().map(|c| c.footprint_distance(x, y));
        boxes.chain(cyls).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SurfaceLabel {
    Ground,
    Obstacle,
    None,
}

/// Ground truth paired with a rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFrame {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<SurfaceLabel>,
    /// Height of the hit point above the floor.
    pub hit_height: Vec<f32>,
    /// Height of the obstacle that was hit; 0 for floor and misses.
    pub obstacle_height: Vec<f32>,
    /// Horizontal distance from the camera to the hit point.
    pub range: Vec<f32>,
    /// Which surface was hit: 0 nothing, 1 floor, then boxes followed by
    /// cylinders in scene order.
    pub surface: Vec<u16>,
}

impl LabelFrame {
    fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            labels: vec![SurfaceLabel::None; n],
            hit_height: vec![0.0; n],
            obstacle_height: vec![0.0; n],
            range: vec![0.0; n],
            surface: vec![0; n],
        }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> SurfaceLabel {
        self.labels[v * self.width + u]
    }

    /// True when any 8-neighbour shows a different surface (a label change
    /// or an occlusion boundary between two obstacles).
    pub fn near_label_edge(&self, u: usize, v: usize) -> bool {
        let l = self.surface[v * self.width + u];
        let (w, h) = (self.width as i64, self.height as i64);
        for dv in -1i64..=1 {
            for du in -1i64..=1 {
                let (nu, nv) = (u as i64 + du, v as i64 + dv);
                if nu >= 0 && nv >= 0 && nu < w && nv < h && self.surface[nv as usize * self.width + nu as usize] != l {
                    return true;
                }
            }
        }
        false
    }

    fn clear(&mut self, idx: usize) {
        self.labels[idx] = SurfaceLabel::None;
        self.hit_height[idx] = 0.0;
        self.obstacle_height[idx] = 0.0;
        self.range[idx] = 0.0;
        self.surface[idx] = 0;
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    obstacle_height: f64,
    surface: u16,
}

fn ray_box(o: [f64; 3], d: [f64; 3], b: &BoxObstacle) -> Option<f64> {
    let lo = [b.x_min, b.y_min, 0.0];
    let hi = [b.x_max, b.y_max, b.height];
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
        } else {
            let t1 = (lo[k] - o[k]) / d[k];
            let t2 = (hi[k] - o[k]) / d[k];
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_enter = t_enter.max(a);
            t_exit = t_exit.min(b);
        }
    }
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    // camera inside the box sees nothing
    Some(t_enter.max(0.0))
}

fn ray_cylinder(o: [f64; 3], d: [f64; 3], c: &Cylinder) -> Option<f64> {
    let ox = o[0] - c.cx;
    let oy = o[1] - c.cy;
    let r2 = c.radius * c.radius;
    let inside_xy = ox * ox + oy * oy <= r2;
    if inside_xy && o[2] <= c.height {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let a = d[0] * d[0] + d[1] * d[1];
    if a > 1e-18 && !inside_xy {
        let b = 2.0 * (ox * d[0] + oy * d[1]);
        let cc = ox * ox + oy * oy - r2;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let z = o[2] + t * d[2];
            if t > 0.0 && (0.0..=c.height).contains(&z) {
                best = Some(t);
            }
        }
    }
    if d[2] < 0.0 && o[2] > c.height {
        let t = (c.height - o[2]) / d[2];
        let px = ox + t * d[0];
        let py = oy + t * d[1];
        if t > 0.0 && px * px + py * py <= r2 {
            best = Some(best.map_or(t, |b| b.min(t)));
        }
    }
    best
}

/// Ray-cast a depth frame and its ground-truth labels from the camera on a
/// robot at `robot_pose`. Depth is the optical-axis distance to the nearest
/// surface; samples outside `[min_depth, max_depth]` are invalid (0).
pub fn render_depth(scene: &Scene, robot_pose: &Pose2D, cam: &CameraModel) -> (DepthFrame, LabelFrame) {
    render_depth_sampled(scene, robot_pose, cam, 1, 1)
}

/// Like `render_depth` but only casts rays for every `column_stride`-th
/// column of every `row_stride`-th row; other pixels stay invalid.
pub fn render_depth_sampled(
    scene: &Scene,
    robot_pose: &Pose2D,
    cam: &CameraModel,
    column_stride: usize,
    row_stride: usize,
) -> (DepthFrame, LabelFrame) {
    let (w, h) = (cam.width, cam.height);
    let mut frame = DepthFrame::new(w, h);
    let mut labels = LabelFrame::new(w, h);
    let (s, c) = robot_pose.theta.sin_cos();
    let origin = [robot_pose.x, robot_pose.y, cam.mount_height];

    for v in (0..h).step_by(row_stride.max(1)) {
        let descent = cam.row_descent(v as f64);
        let ground_t = if descent > 0.0 {
            Some(cam.mount_height / descent)
        } else {
            None
        };
        for u in (0..w).step_by(column_stride.max(1)) {
            let local = cam.ray_direction(u as f64, v as f64);
            let dir = [c * local[0] - s * local[1], s * local[0] + c * local[1], local[2]];

            let mut best: Option<Hit> = ground_t.map(|t| Hit {
                t,
                obstacle_height: 0.0,
                surface: 1,
            });
            let mut consider = |t: Option<f64>, height: f64, surface: usize| {
                if let Some(t) = t {
                    if best.is_none_or(|b| t < b.t) {
                        best = Some(Hit {
                            t,
                            obstacle_height: height,
                            surface: surface as u16,
                        });
                    }
                }
            };
            for (k, b) in scene.boxes.iter().enumerate() {
                consider(ray_box(origin, dir, b), b.height, 2 + k);
            }
            for (k, cyl) in scene.cylinders.iter().enumerate() {
                consider(ray_cylinder(origin, dir, cyl), cyl.height, 2 + scene.boxes.len() + k);
            }

            let idx = v * w + u;
            if let Some(hit) = best {
                if hit.t >= cam.min_depth && hit.t <= cam.max_depth {
                    frame.depth[idx] = hit.t;
                    let is_ground = hit.obstacle_height == 0.0;
                    labels.labels[idx] = if is_ground {
                        SurfaceLabel::Ground
                    } else {
                        SurfaceLabel::Obstacle
                    };
                    labels.hit_height[idx] = if is_ground {
                        0.0
                    } else {
                        (cam.mount_height + hit.t * dir[2]) as f32
                    };
                    labels.obstacle_height[idx] = hit.obstacle_height as f32;
                    labels.range[idx] = (hit.t * dir[0].hypot(dir[1])) as f32;
                    labels.surface[idx] = hit.surface;
                }
            }
        }
    }
    (frame, labels)
}

/// Sensor imperfections applied on top of a clean render.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DepthNoise {
    /// Standard deviation of additive Gaussian depth noise (m).
    pub sigma: f64,
    /// Probability that a valid sample drops out.
    pub dropout: f64,
}

impl DepthNoise {
    pub fn is_none(&self) -> bool {
        self.sigma == 0.0 && self.dropout == 0.0
    }
}

/// Perturb a rendered frame in place. Samples pushed out of range or dropped
/// become invalid and their labels become `None`.
pub fn apply_noise<R: Rng>(frame: &mut DepthFrame, labels: &mut LabelFrame, cam: &CameraModel, noise: &DepthNoise, rng: &mut R) {
    if noise.is_none() {
        return;
    }
    let normal = Normal::new(0.0, noise.sigma.max(0.0)).expect("finite sigma");
    for idx in 0..frame.depth.len() {
        let z = frame.depth[idx];
        if z == 0.0 {
            continue;
        }
        let dropped = noise.dropout > 0.0 && rng.gen::<f64>() < noise.dropout;
        let z = if noise.sigma > 0.0 { z + normal.sample(rng) } else { z };
        if dropped || z < cam.min_depth || z > cam.max_depth {
            frame.depth[idx] = 0.0;
            labels.clear(idx);
        } else {
            frame.depth[idx] = z;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState {
    pub robot_pose: Pose2D,
    pub robot_twist: Twist,
    pub time: f64,
}

fn approach(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

/// Advance the robot by `dt` under `cmd`, respecting velocity and
/// acceleration limits.
pub fn step_sim(state: &SimState, cmd: &Twist, dt: f64, params: &RobotParams) -> SimState {
    let target_v = cmd.v.clamp(-params.v_max, params.v_max);
    let target_w = cmd.omega.clamp(-params.omega_max, params.omega_max);
    let twist = Twist::new(
        approach(state.robot_twist.v, target_v, params.a_max * dt),
        approach(state.robot_twist.omega, target_w, params.alpha_max * dt),
    );
    SimState {
        robot_pose: unicycle_step(&state.robot_pose, &twist, dt),
        robot_twist: twist,
        time: state.time + dt,
    }
}

/// True when the robot disc overlaps an obstacle footprint or crosses the
/// scene bounds. Touching at exactly `radius` is not a collision.
pub fn check_collision(scene: &Scene, pose: &Pose2D, params: &RobotParams) -> bool {
    let r = params.radius;
    let b = &scene.bounds;
    if pose.x - r < b.x_min || pose.x + r > b.x_max || pose.y - r < b.y_min || pose.y + r > b.y_max {
        return true;
    }
    scene.obstacle_distance(pose.x, pose.y) < r
}

/// Segmentation scored against the renderer's labels on the sampled lattice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegScore {
    pub sampled: usize,
    pub agreed: usize,
    /// Obstacle pixels called ground: obstacle at least `MIN_SCORED_HEIGHT`
    /// tall, within `MAX_SCORED_RANGE`, not next to a label edge.
    pub obstacle_as_ground: usize,
}

impl SegScore {
    pub const MIN_SCORED_HEIGHT: f64 = 0.15;
    pub const MAX_SCORED_RANGE: f64 = 3.0;

    pub fn accuracy(&self) -> f64 {
        if self.sampled == 0 {
            1.0
        } else {
            self.agreed as f64 / self.sampled as f64
        }
    }

    pub fn add(&mut self, other: &SegScore) {
        self.sampled += other.sampled;
        self.agreed += other.agreed;
        self.obstacle_as_ground += other.obstacle_as_ground;
    }
}

/// Class a perfect segmenter would give a pixel.
pub fn expected_class(labels: &LabelFrame, u: usize, v: usize, seg: &SegParams) -> PixelClass {
    let i = v * labels.width + u;
    match labels.labels[i] {
        SurfaceLabel::None => PixelClass::Unknown,
        SurfaceLabel::Ground => PixelClass::Ground,
        SurfaceLabel::Obstacle if labels.hit_height[i] as f64 > seg.clearance_height => PixelClass::Overhead,
        SurfaceLabel::Obstacle => PixelClass::Obstacle,
    }
}

pub fn score_segmentation(classes: &PixelClassFrame, labels: &LabelFrame, seg: &SegParams) -> SegScore {
    assert_eq!((classes.width, classes.height), (labels.width, labels.height), "frame sizes differ");
    let mut score = SegScore::default();
    for v in (0..labels.height).step_by(seg.row_stride) {
        for u in (0..labels.width).step_by(seg.column_stride) {
            let got = classes.at(u, v);
            score.sampled += 1;
            if got == expected_class(labels, u, v, seg) {
                score.agreed += 1;
            }
            let i = v * labels.width + u;
            if got == PixelClass::Ground
                && labels.labels[i] == SurfaceLabel::Obstacle
                && labels.obstacle_height[i] as f64 >= SegScore::MIN_SCORED_HEIGHT
                && labels.range[i] as f64 <= SegScore::MAX_SCORED_RANGE
                && !labels.near_label_edge(u, v)
            {
                score.obstacle_as_ground += 1;
            }
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundseg::expected_ground_depth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> Bounds {
        Bounds {
            x_min: -5.0,
            x_max: 5.0,
            y_min: -5.0,
            y_max: 5.0,
        }
    }

    fn level_cam() -> CameraModel {
        CameraModel {
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 241,
            mount_height: 0.5,
            pitch: 0.0,
            min_depth: 0.1,
            max_depth: 10.0,
        }
    }

    #[test]
    fn empty_scene_ground_pixel() {
        let cam = level_cam();
        let (frame, labels) = render_depth(&Scene::empty(bounds()), &Pose2D::identity(), &cam);
        assert!((frame.at(100, 240) - 1.25).abs() < 1e-12);
        assert_eq!(labels.at(100, 240), SurfaceLabel::Ground);
        for v in [0, 60, 120] {
            assert_eq!(frame.at(5, v), 0.0);
            assert_eq!(labels.at(5, v), SurfaceLabel::None);
        }
    }

    #[test]
    fn box_face_nearer_than_floor() {
        let cam = level_cam();
        let mut scene = Scene::empty(bounds());
        scene.boxes.push(BoxObstacle::new(1.0, 1.5, -1.0, 1.0, 0.3));
        let (frame, labels) = render_depth(&scene, &Pose2D::identity(), &cam);
        // row 240 meets the floor at 1.25 m, the face at 1.0 m is closer
        let v = 240;
        let u = 160;
        assert!((frame.at(u, v) - 1.0).abs() < 1e-12);
        assert_eq!(labels.at(u, v), SurfaceLabel::Obstacle);
        assert!((labels.hit_height[v * cam.width + u] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn renderer_agrees_with_ground_model() {
        let cam = CameraModel::default();
        let pose = Pose2D::new(0.3, -0.2, 0.7);
        let (frame, labels) = render_depth(&Scene::empty(bounds()), &pose, &cam);
        for v in 0..cam.height {
            for u in (0..cam.width).step_by(7) {
                let z = frame.at(u, v);
                if labels.at(u, v) == SurfaceLabel::Ground {
                    let d = expected_ground_depth(&cam, v as f64).unwrap();
                    assert!((z - d).abs() < 1e-6);
                } else {
                    assert_eq!(z, 0.0);
                }
            }
        }
    }

    #[test]
    fn sampled_render_matches_full_on_lattice() {
        let mut scene = Scene::empty(bounds());
        scene.boxes.push(BoxObstacle::new(1.0, 1.4, -0.5, 0.2, 0.4));
        scene.cylinders.push(Cylinder::new(2.0, 0.6, 0.2, 0.8));
        let cam = CameraModel::default();
        let pose = Pose2D::new(0.1, 0.0, 0.1);
        let (full, _) = render_depth(&scene, &pose, &cam);
        let (part, labels) = render_depth_sampled(&scene, &pose, &cam, 2, 3);
        for v in 0..cam.height {
            for u in 0..cam.width {
                let i = v * cam.width + u;
                if u % 2 == 0 && v % 3 == 0 {
                    assert_eq!(part.depth[i], full.depth[i]);
                } else {
                    assert_eq!(part.depth[i], 0.0);
                    assert_eq!(labels.labels[i], SurfaceLabel::None);
                }
            }
        }
    }

    #[test]
    fn scoring_counts_by_hand() {
        // 4x1 frame, every pixel sampled
        let seg = SegParams {
            column_stride: 1,
            row_stride: 1,
            ..SegParams::default()
        };
        let mut labels = LabelFrame::new(4, 1);
        labels.labels = vec![SurfaceLabel::Ground, SurfaceLabel::Obstacle, SurfaceLabel::Obstacle, SurfaceLabel::Obstacle];
        labels.surface = vec![1, 2, 2, 2];
        labels.hit_height = vec![0.0, 0.1, 0.1, 0.5];
        labels.obstacle_height = vec![0.0, 0.6, 0.6, 0.6];
        labels.range = vec![1.0; 4];
        let classes = PixelClassFrame {
            width: 4,
            height: 1,
            classes: vec![PixelClass::Ground, PixelClass::Obstacle, PixelClass::Ground, PixelClass::Overhead],
        };
        let s = score_segmentation(&classes, &labels, &seg);
        assert_eq!((s.sampled, s.agreed), (4, 3));
        // pixel 2 is flanked by obstacle labels only, so it is not an edge pixel
        assert_eq!(s.obstacle_as_ground, 1);
        labels.range[2] = 3.5;
        assert_eq!(score_segmentation(&classes, &labels, &seg).obstacle_as_ground, 0);
        // a second obstacle behind pixel 3 makes pixel 2 an occlusion edge
        labels.range[2] = 1.0;
        labels.surface[3] = 3;
        assert_eq!(score_segmentation(&classes, &labels, &seg).obstacle_as_ground, 0);
    }

    #[test]
    fn empty_scene_scores_perfectly() {
        let cam = CameraModel::default();
        let seg = SegParams::default();
        let (frame, labels) = render_depth(&Scene::empty(bounds()), &Pose2D::identity(), &cam);
        let classes = crate::groundseg::segment(&frame, &cam, &seg).unwrap();
        let s = score_segmentation(&classes, &labels, &seg);
        assert_eq!(s.sampled, 212 * 120);
        assert_eq!(s.agreed, s.sampled);
    }

    #[test]
    fn cylinder_wall_and_top() {
        let cam = CameraModel {
            pitch: 0.4,
            ..level_cam()
        };
        let mut scene = Scene::empty(bounds());
        scene.cylinders.push(Cylinder::new(1.2, 0.0, 0.2, 0.2));
        let (frame, labels) = render_depth(&scene, &Pose2D::identity(), &cam);
        let u = 160;
        let mut saw_top = false;
        let mut saw_wall = false;
        for v in 0..cam.height {
            let i = v * cam.width + u;
            if labels.labels[i] == SurfaceLabel::Obstacle {
                let p = cam.back_project(u as f64, v as f64, frame.depth[i]);
                let r = (p[0] - 1.2).hypot(p[1]);
                if (p[2] - 0.2).abs() < 1e-9 {
                    saw_top = true;
                    assert!(r <= 0.2 + 1e-9);
                } else {
                    saw_wall = true;
                    assert!((r - 0.2).abs() < 1e-9);
                }
            }
        }
        assert!(saw_top && saw_wall);
    }

    #[test]
    fn noise_invalidates_consistently() {
        let cam = CameraModel::default();
        let (mut frame, mut labels) = render_depth(&Scene::empty(bounds()), &Pose2D::identity(), &cam);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = DepthNoise {
            sigma: 0.01,
            dropout: 0.2,
        };
        apply_noise(&mut frame, &mut labels, &cam, &noise, &mut rng);
        let dropped = frame.depth.iter().filter(|&&z| z == 0.0).count();
        assert!(dropped > cam.pixel_count() / 5);
        for (z, l) in frame.depth.iter().zip(&labels.labels) {
            assert_eq!(*z == 0.0, *l == SurfaceLabel::None);
        }
    }

    #[test]
    fn step_examples() {
        let p = RobotParams::default();
        let s0 = SimState {
            robot_pose: Pose2D::new(1.0, 2.0, 0.3),
            robot_twist: Twist::new(0.2, 0.1),
            time: 1.0,
        };
        let cmd = Twist::new(0.22, 0.15);
        let s1 = step_sim(&s0, &cmd, 0.05, &p);
        assert_eq!(s1.robot_twist, cmd);
        assert_eq!(s1.robot_pose, unicycle_step(&s0.robot_pose, &cmd, 0.05));
        assert_eq!(s1.time, 1.05);

        let fast = step_sim(&s0, &Twist::new(10.0 * p.v_max, 0.1), 0.05, &p);
        assert!((fast.robot_twist.v - (0.2 + p.a_max * 0.05)).abs() < 1e-12);

        let rest = SimState::default();
        assert_eq!(step_sim(&rest, &Twist::ZERO, 0.1, &p).robot_pose, rest.robot_pose);
    }

    #[test]
    fn collision_examples() {
        let p = RobotParams::default();
        let mut scene = Scene::empty(bounds());
        scene.boxes.push(BoxObstacle::new(1.0, 2.0, -0.5, 0.5, 0.05));
        assert!(check_collision(&scene, &Pose2D::new(0.9, 0.0, 0.0), &p));
        assert!(!check_collision(&scene, &Pose2D::new(0.0, 0.0, 0.0), &p));
        // tangent to the face is allowed; 1.0 - 0.75 is exact
        let wide = RobotParams { radius: 0.25, ..p };
        assert!(!check_collision(&scene, &Pose2D::new(0.75, 0.0, 0.0), &wide));
        assert!(check_collision(&scene, &Pose2D::new(0.76, 0.0, 0.0), &wide));
        assert!(check_collision(&scene, &Pose2D::new(4.9, 0.0, 0.0), &p));
    }
}
