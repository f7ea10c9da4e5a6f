//! Seeded random obstacle courses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BoxObstacle, Bounds, Cylinder, Scenario, Scene};
use crate::geometry::{normalize_angle, Pose2D, RobotParams};
use crate::globalplanner::{inflate, plan};
use crate::mapping::OccupancyGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomScenarioConfig {
    pub width: f64,
    pub height: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub min_height: f64,
    pub max_height: f64,
    /// Probability that an obstacle is left out of the prior map.
    pub unmapped_probability: f64,
    /// Free distance kept around start and goal.
    pub keep_out: f64,
    /// Extra clearance beyond the robot radius a route must have.
    pub route_margin: f64,
    pub max_attempts: usize,
}

impl Default for RandomScenarioConfig {
    fn default() -> Self {
        Self {
            width: 6.0,
            height: 4.0,
            min_obstacles: 3,
            max_obstacles: 6,
            min_height: 0.1,
            max_height: 1.0,
            unmapped_probability: 0.2,
            keep_out: 0.7,
            route_margin: 0.1,
            max_attempts: 200,
        }
    }
}

fn sample_scene(rng: &mut ChaCha8Rng, cfg: &RandomScenarioConfig) -> (Scene, Pose2D, (f64, f64)) {
    let bounds = Bounds {
        x_min: 0.0,
        x_max: cfg.width,
        y_min: 0.0,
        y_max: cfg.height,
    };
    let margin = 0.5;
    let sy = rng.gen_range(margin..cfg.height - margin);
    let gy = rng.gen_range(margin..cfg.height - margin);
    let start_xy = (margin, sy);
    let goal = (cfg.width - margin, gy);
    let heading = (goal.1 - start_xy.1).atan2(goal.0 - start_xy.0);
    let start = Pose2D::new(start_xy.0, start_xy.1, normalize_angle(heading + rng.gen_range(-0.6..0.6)));

    let mut scene = Scene::empty(bounds);
    let n = rng.gen_range(cfg.min_obstacles..=cfg.max_obstacles);
    let mut placed = 0;
    let mut tries = 0;
    while placed < n && tries < 100 {
        tries += 1;
        let cx = rng.gen_range(1.2..cfg.width - 1.2);
        let cy = rng.gen_range(0.3..cfg.height - 0.3);
        let h = rng.gen_range(cfg.min_height..cfg.max_height);
        let mapped = !rng.gen_bool(cfg.unmapped_probability);
        let far = |x: f64, y: f64, r: f64| {
            let d0 = (x - start_xy.0).hypot(y - start_xy.1);
            let d1 = (x - goal.0).hypot(y - goal.1);
            d0 - r > cfg.keep_out && d1 - r > cfg.keep_out
        };
        if rng.gen_bool(0.5) {
            let (hw, hh): (f64, f64) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
            if !far(cx, cy, hw.hypot(hh)) {
                continue;
            }
            let mut b = BoxObstacle::new(cx - hw, cx + hw, cy - hh, cy + hh, h);
            b.mapped = mapped;
            scene.boxes.push(b);
        } else {
            let r = rng.gen_range(0.1..0.3);
            if !far(cx, cy, r) {
                continue;
            }
            let mut c = Cylinder::new(cx, cy, r, h);
            c.mapped = mapped;
            scene.cylinders.push(c);
        }
        placed += 1;
    }
    (scene, start, goal)
}

/// A route exists through the full scene (mapped or not) for a disc of
/// radius `radius + route_margin`.
fn solvable(scene: &Scene, start: &Pose2D, goal: (f64, f64), robot: &RobotParams, cfg: &RandomScenarioConfig) -> bool {
    let mut all = scene.clone();
    all.boxes.iter_mut().for_each(|b| b.mapped = true);
    all.cylinders.iter_mut().for_each(|c| c.mapped = true);
    let grid = OccupancyGrid::from_scene(&all, 0.05);
    let fat = RobotParams {
        radius: robot.radius + cfg.route_margin,
        ..*robot
    };
    let Ok(cm) = inflate(&grid, &fat, fat.radius) else {
        return false;
    };
    let (Ok(s), Ok(g)) = (
        cm.geometry.world_to_grid(start.x, start.y),
        cm.geometry.world_to_grid(goal.0, goal.1),
    ) else {
        return false;
    };
    plan(&cm, s, g).is_ok()
}

/// Deterministic in `seed`. Layouts without a comfortable route are
/// rejected and resampled from the same stream; after `max_attempts` the
/// obstacle-free layout is returned.
pub fn random_scenario(seed: u64, cfg: &RandomScenarioConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot = RobotParams::default();
    for _ in 0..cfg.max_attempts {
        let (scene, start, goal) = sample_scene(&mut rng, cfg);
        if solvable(&scene, &start, goal, &robot, cfg) {
            let mut sc = Scenario::minimal(start, goal);
            sc.scene = scene;
            sc.seed = seed;
            return sc;
        }
    }
    let (mut scene, start, goal) = sample_scene(&mut rng, cfg);
    scene.boxes.clear();
    scene.cylinders.clear();
    let mut sc = Scenario::minimal(start, goal);
    sc.scene = scene;
    sc.seed = seed;
    sc
}
