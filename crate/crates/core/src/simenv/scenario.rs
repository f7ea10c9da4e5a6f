//! Line-oriented scenario files.
//!
//! ```text
//! # corridor with one pillar
//! bounds = 0 6 0 3
//! start = 0.5 1.5 0
//! goal = 5.5 1.5
//! box = 2.0 2.4 0.0 1.0 0.5
//! cylinder = 4.0 2.0 0.2 0.3
//! camera.pitch = 0.35
//! ```
//!
//! `box`, `cylinder`, `unmapped_box` and `unmapped_cylinder` may repeat; any
//! other key may appear once. Unmapped obstacles exist in the world but are
//! left out of the prior map given to the planner.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{BoxObstacle, Bounds, Cylinder, DepthNoise, Scene};
use crate::geometry::{CameraModel, Pose2D, RobotParams};
use crate::groundseg::SegParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scene: Scene,
    pub start: Pose2D,
    pub goal: (f64, f64),
    pub camera: CameraModel,
    pub robot: RobotParams,
    pub seed: u64,
    /// Cell size of the world occupancy grid and costmap (m).
    pub map_resolution: f64,
    pub seg: SegParams,
    pub noise: DepthNoise,
}

impl Scenario {
    /// Empty world around `start` and `goal` with default everything.
    pub fn minimal(start: Pose2D, goal: (f64, f64)) -> Self {
        let robot = RobotParams::default();
        Self {
            scene: Scene::empty(default_bounds(&start, goal)),
            start,
            goal,
            camera: CameraModel::default(),
            robot,
            seed: 0,
            map_resolution: 0.05,
            seg: SegParams {
                clearance_height: robot.clearance_height,
                ..SegParams::default()
            },
            noise: DepthNoise::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = |e: String| ScenarioError::Validation(e);
        self.scene.validate().map_err(v)?;
        self.camera.validate().map_err(|e| v(e.to_string()))?;
        self.robot.validate().map_err(|e| v(e.to_string()))?;
        self.seg.validate().map_err(|e| v(e.to_string()))?;
        if !(self.map_resolution > 0.0 && self.map_resolution.is_finite()) {
            return Err(v(format!("resolution must be positive, got {}", self.map_resolution)));
        }
        if !self.start.is_finite() || !self.scene.bounds.contains(self.start.x, self.start.y) {
            return Err(v("start lies outside the scene bounds".into()));
        }
        if !self.scene.bounds.contains(self.goal.0, self.goal.1) {
            return Err(v("goal lies outside the scene bounds".into()));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(v("noise.depth_sigma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.noise.dropout) {
            return Err(v("noise.dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Serialize back to the scenario file format; `load_scenario` on the
    /// result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = &self.scene.bounds;
        let _ = writeln!(s, "bounds = {} {} {} {}", b.x_min, b.x_max, b.y_min, b.y_max);
        let _ = writeln!(s, "start = {} {} {}", self.start.x, self.start.y, self.start.theta);
        let _ = writeln!(s, "goal = {} {}", self.goal.0, self.goal.1);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "resolution = {}", self.map_resolution);
        for o in &self.scene.boxes {
            let key = if o.mapped { "box" } else { "unmapped_box" };
            let _ = writeln!(s, "{key} = {} {} {} {} {}", o.x_min, o.x_max, o.y_min, o.y_max, o.height);
        }
        for c in &self.scene.cylinders {
            let key = if c.mapped { "cylinder" } else { "unmapped_cylinder" };
            let _ = writeln!(s, "{key} = {} {} {} {}", c.cx, c.cy, c.radius, c.height);
        }
        let c = &self.camera;
        for (k, val) in [
            ("fx", c.fx),
            ("fy", c.fy),
            ("cx", c.cx),
            ("cy", c.cy),
            ("mount_height", c.mount_height),
            ("pitch", c.pitch),
            ("min_depth", c.min_depth),
            ("max_depth", c.max_depth),
        ] {
            let _ = writeln!(s, "camera.{k} = {val}");
        }
        let _ = writeln!(s, "camera.width = {}", c.width);
        let _ = writeln!(s, "camera.height = {}", c.height);
        let r = &self.robot;
        for (k, val) in [
            ("radius", r.radius),
            ("clearance_height", r.clearance_height),
            ("v_max", r.v_max),
            ("omega_max", r.omega_max),
            ("a_max", r.a_max),
            ("alpha_max", r.alpha_max),
        ] {
            let _ = writeln!(s, "robot.{k} = {val}");
        }
        let g = &self.seg;
        let _ = writeln!(s, "seg.tau_ground = {}", g.tau_ground);
        let _ = writeln!(s, "seg.tau_obstacle = {}", g.tau_obstacle);
        let _ = writeln!(s, "seg.column_stride = {}", g.column_stride);
        let _ = writeln!(s, "seg.row_stride = {}", g.row_stride);
        let _ = writeln!(s, "seg.min_obstacle_hits = {}", g.min_obstacle_hits);
        let _ = writeln!(s, "seg.map_range = {}", g.map_range);
        let _ = writeln!(s, "seg.map_resolution = {}", g.map_resolution);
        let _ = writeln!(s, "noise.depth_sigma = {}", self.noise.sigma);
        let _ = writeln!(s, "noise.dropout = {}", self.noise.dropout);
        s
    }
}

fn default_bounds(start: &Pose2D, goal: (f64, f64)) -> Bounds {
    const MARGIN: f64 = 2.0;
    Bounds {
        x_min: start.x.min(goal.0) - MARGIN,
        x_max: start.x.max(goal.0) + MARGIN,
        y_min: start.y.min(goal.1) - MARGIN,
        y_max: start.y.max(goal.1) + MARGIN,
    }
}

const REPEATABLE: [&str; 4] = ["box", "cylinder", "unmapped_box", "unmapped_cylinder"];

fn numbers(line: usize, key: &str, value: &str, n: usize) -> Result<Vec<f64>, ScenarioError> {
    let parsed: Result<Vec<f64>, _> = value.split_whitespace().map(str::parse::<f64>).collect();
    match parsed {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        Ok(v) if v.len() != n => Err(ScenarioError::Parse {
            line,
            msg: format!("`{key}` expects {n} numbers, found {}", v.len()),
        }),
        _ => Err(ScenarioError::Parse {
            line,
            msg: format!("`{key}` has a malformed number in {value:?}"),
        }),
    }
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ScenarioError> {
    value.parse().map_err(|_| ScenarioError::Parse {
        line,
        msg: format!("`{key}` expects a non-negative integer, found {value:?}"),
    })
}

/// Parse and validate a scenario file.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut start: Option<Pose2D> = None;
    let mut goal: Option<(f64, f64)> = None;
    let mut bounds: Option<Bounds> = None;
    let mut sc = Scenario::minimal(Pose2D::identity(), (0.0, 0.0));

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ScenarioError::Parse {
                line,
                msg: format!("expected `key = value`, found {content:?}"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !REPEATABLE.contains(&key) && !seen.insert(key.to_string()) {
            return Err(ScenarioError::Parse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        let one = |k: &str| numbers(line, k, value, 1).map(|v| v[0]);
        match key {
            "bounds" => {
                let v = numbers(line, key, value, 4)?;
                bounds = Some(Bounds {
                    x_min: v[0],
                    x_max: v[1],
                    y_min: v[2],
                    y_max: v[3],
                });
            }
            "start" => {
                let v = numbers(line, key, value, 3)?;
                start = Some(Pose2D::new(v[0], v[1], v[2]));
            }
            "goal" => {
                let v = numbers(line, key, value, 2)?;
                goal = Some((v[0], v[1]));
            }
            "seed" => sc.seed = integer(line, key, value)?,
            "resolution" => sc.map_resolution = one(key)?,
            "box" | "unmapped_box" => {
                let v = numbers(line, key, value, 5)?;
                let mut b = BoxObstacle::new(v[0], v[1], v[2], v[3], v[4]);
                b.mapped = key == "box";
                sc.scene.boxes.push(b);
            }
            "cylinder" | "unmapped_cylinder" => {
                let v = numbers(line, key, value, 4)?;
                let mut c = Cylinder::new(v[0], v[1], v[2], v[3]);
                c.mapped = key == "cylinder";
                sc.scene.cylinders.push(c);
            }
            "camera.fx" => sc.camera.fx = one(key)?,
            "camera.fy" => sc.camera.fy = one(key)?,
            "camera.cx" => sc.camera.cx = one(key)?,
            "camera.cy" => sc.camera.cy = one(key)?,
            "camera.width" => sc.camera.width = integer(line, key, value)?,
            "camera.height" => sc.camera.height = integer(line, key, value)?,
            "camera.mount_height" => sc.camera.mount_height = one(key)?,
            "camera.pitch" => sc.camera.pitch = one(key)?,
            "camera.min_depth" => sc.camera.min_depth = one(key)?,
            "camera.max_depth" => sc.camera.max_depth = one(key)?,
            "robot.radius" => sc.robot.radius = one(key)?,
            "robot.clearance_height" => sc.robot.clearance_height = one(key)?,
            "robot.v_max" => sc.robot.v_max = one(key)?,
            "robot.omega_max" => sc.robot.omega_max = one(key)?,
            "robot.a_max" => sc.robot.a_max = one(key)?,
            "robot.alpha_max" => sc.robot.alpha_max = one(key)?,
            "seg.tau_ground" => sc.seg.tau_ground = one(key)?,
            "seg.tau_obstacle" => sc.seg.tau_obstacle = one(key)?,
            "seg.column_stride" => sc.seg.column_stride = integer(line, key, value)?,
            "seg.row_stride" => sc.seg.row_stride = integer(line, key, value)?,
            "seg.min_obstacle_hits" => sc.seg.min_obstacle_hits = integer(line, key, value)?,
            "seg.map_range" => sc.seg.map_range = one(key)?,
            "seg.map_resolution" => sc.seg.map_resolution = one(key)?,
            "noise.depth_sigma" => sc.noise.sigma = one(key)?,
            "noise.dropout" => sc.noise.dropout = one(key)?,
            _ => {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
    }

    sc.start = start.ok_or_else(|| ScenarioError::Validation("missing required key `start`".into()))?;
    sc.goal = goal.ok_or_else(|| ScenarioError::Validation("missing required key `goal`".into()))?;
    sc.scene.bounds = bounds.unwrap_or_else(|| default_bounds(&sc.start, sc.goal));
    sc.seg.clearance_height = sc.robot.clearance_height;
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let sc = load_scenario("start = 0 0 0\ngoal = 2 0\n").unwrap();
        assert_eq!(sc.start, Pose2D::identity());
        assert_eq!(sc.goal, (2.0, 0.0));
        assert!(sc.scene.boxes.is_empty() && sc.scene.cylinders.is_empty());
        assert_eq!(sc.camera, CameraModel::default());
        assert_eq!(sc.robot, RobotParams::default());
        assert_eq!(sc.map_resolution, 0.05);
        assert!(sc.scene.bounds.contains(-1.0, 1.0));
    }

    #[test]
    fn duplicate_key_is_parse_error_with_line() {
        let err = load_scenario("start = 0 0 0\ngoal = 2 0\n# note\ngoal = 3 0\n").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Parse {
                line: 4,
                msg: "duplicate key `goal`".into()
            }
        );
    }

    #[test]
    fn repeated_obstacles_are_allowed() {
        let sc = load_scenario(
            "start = 0 0 0\ngoal = 2 0\nbox = 1 1.2 -1 1 0.3\nbox = 1 1.2 2 3 0.3\nunmapped_cylinder = 0 1 0.1 0.2 # post\n",
        )
        .unwrap();
        assert_eq!(sc.scene.boxes.len(), 2);
        assert!(!sc.scene.cylinders[0].mapped);
    }

    #[test]
    fn negative_resolution_is_validation_error() {
        let err = load_scenario("start = 0 0 0\ngoal = 2 0\nresolution = -0.05\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(_)));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            load_scenario("start = 0 0\n"),
            Err(ScenarioError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_scenario("start = 0 0 0\nwhatever\n"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_scenario("start = 0 0 0\ngoal = 1 1\nrobot.wheels = 4\n"),
            Err(ScenarioError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            load_scenario("start = 0 0 0\ngoal = 1 x\n"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
        assert!(matches!(load_scenario("goal = 1 1\n"), Err(ScenarioError::Validation(_))));
        assert!(matches!(
            load_scenario("start = 0 0 0\ngoal = 1 1\nbox = 1 0.5 0 1 0.2\n"),
            Err(ScenarioError::Validation(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let mut sc = load_scenario(
            "bounds = -1 7 -2 2.5\nstart = 0.1 0.2 0.3\ngoal = 5 1\nseed = 99\nbox = 1 1.3 -0.4 0.4 0.25\nunmapped_cylinder = 3 1 0.2 0.6\nnoise.depth_sigma = 0.01\n",
        )
        .unwrap();
        sc.camera.pitch = 0.123456789012345;
        let again = load_scenario(&sc.to_text()).unwrap();
        assert_eq!(again, sc);
    }
}
