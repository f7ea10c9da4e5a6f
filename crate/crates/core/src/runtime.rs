//! Closed-loop navigation: perception, mapping/replanning and control
//! interleaved by a single-threaded scheduler in simulated time, plus the
//! throughput benchmark.

use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Pose2D, RobotParams, Twist};
use crate::globalplanner::{cells_to_world, inflate, plan, shortcut, PlanError};
use crate::groundseg::{project_to_traversability, segment, TravCell, TraversabilityMap};
use crate::localplanner::{
    recovery, Decision, DWParams, Policy, PolicyError, PolicyInput, RulePolicy, Target, WaypointTracker,
};
use crate::mapping::{CellClass, DeadReckoning, OccupancyGrid, PoseProvider};
use crate::simenv::{
    apply_noise, check_collision, render_depth, render_depth_sampled, step_sim, Scenario, ScenarioError, SimState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseSource {
    GroundTruth,
    DeadReckoning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub control_rate: f64,
    pub replan_rate: f64,
    pub perception_rate: f64,
    /// Snapshots older than this stop the robot.
    pub stale_timeout: f64,
    /// Simulated seconds before the run ends as `Timeout`.
    pub timeout: f64,
    pub recovery_timeout: f64,
    pub inflation_radius: f64,
    /// Added to the robot radius for the lethal core of the global costmap.
    pub plan_margin: f64,
    /// Tighter margin tried when `plan_margin` leaves no route.
    pub min_plan_margin: f64,
    /// Beyond the robot radius, cleared around the robot before giving up
    /// on the policy and rotating.
    pub footprint_margin: f64,
    pub lookahead: f64,
    /// Pace ticks against the wall clock.
    pub realtime: bool,
    pub pose_source: PoseSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            control_rate: 18.0,
            replan_rate: 2.0,
            perception_rate: 18.0,
            stale_timeout: 0.25,
            timeout: 120.0,
            recovery_timeout: 3.0,
            inflation_radius: 0.5,
            plan_margin: 0.15,
            min_plan_margin: 0.05,
            footprint_margin: 0.05,
            lookahead: 0.4,
            realtime: false,
            pose_source: PoseSource::GroundTruth,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let err = |m: &str| Err(RuntimeError::Config(m.into()));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.control_rate) {
            return err("control_rate must be positive");
        }
        if !positive(self.replan_rate) || !positive(self.perception_rate) {
            return err("replan_rate and perception_rate must be positive");
        }
        if !(self.stale_timeout > 1.0 / self.control_rate) {
            return err("stale_timeout must exceed one control period");
        }
        if !(self.timeout >= 0.0) {
            return err("timeout must be non-negative");
        }
        if !(self.recovery_timeout > 0.0 && self.inflation_radius > 0.0 && self.min_plan_margin >= 0.0 && self.footprint_margin >= 0.0 && self.plan_margin >= self.min_plan_margin && self.lookahead > 0.0) {
            return err("recovery_timeout, inflation_radius and lookahead must be positive");
        }
        Ok(())
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Rule policy whose dynamic window matches the control period.
    pub fn rule_policy(&self) -> RulePolicy {
        RulePolicy {
            params: DWParams {
                tick_dt: self.control_period(),
                ..DWParams::default()
            },
        }
    }

    fn every(&self, rate: f64) -> usize {
        ((self.control_rate / rate).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NavState {
    Idle,
    Planning,
    Following,
    Reached,
    Failed(String),
}

impl NavState {
    pub fn name(&self) -> &'static str {
        match self {
            NavState::Idle => "idle",
            NavState::Planning => "planning",
            NavState::Following => "following",
            NavState::Reached => "reached",
            NavState::Failed(_) => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, NavState::Reached | NavState::Failed(_))
    }

    pub fn can_transition(&self, to: &NavState) -> bool {
        use NavState::*;
        matches!(
            (self, to),
            (Idle, Planning) | (Planning, Following) | (Planning, Failed(_)) | (Following, Reached) | (Following, Planning) | (Following, Failed(_))
        )
    }
}

impl fmt::Display for NavState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NavState::Failed(reason) => write!(f, "failed({reason})"),
            s => f.write_str(s.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub from: NavState,
    pub to: NavState,
}

struct StateMachine {
    state: NavState,
    log: Vec<Transition>,
}

impl StateMachine {
    fn to(&mut self, time: f64, next: NavState) {
        assert!(self.state.can_transition(&next), "illegal transition {} -> {}", self.state, next);
        self.log.push(Transition {
            time,
            from: self.state.clone(),
            to: next.clone(),
        });
        self.state = next;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reached,
    Collision,
    Timeout,
    Failed(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Reached => f.write_str("reached"),
            Outcome::Collision => f.write_str("collision"),
            Outcome::Timeout => f.write_str("timeout"),
            Outcome::Failed(r) => write!(f, "failed: {r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub time: f64,
    /// Wall-clock stage latencies (s); zero when the stage did not run.
    pub render: f64,
    pub segment: f64,
    pub project: f64,
    pub policy: f64,
    pub total: f64,
    pub cmd: Twist,
    pub perception_age: f64,
    pub stale: bool,
    pub recovering: bool,
    pub state: NavState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub pose: Pose2D,
    pub twist: Twist,
    pub state: NavState,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: Outcome,
    pub trajectory: Vec<TrajectoryPoint>,
    pub ticks: Vec<TickRecord>,
    pub transitions: Vec<Transition>,
    pub decisions: Vec<(f64, Decision)>,
    pub waypoints: Vec<(f64, f64)>,
    pub replans: usize,
    pub world: OccupancyGrid,
}

impl RunReport {
    pub fn final_pose(&self) -> Pose2D {
        self.trajectory.last().expect("trajectory starts with the start pose").pose
    }
}

/// Single-slot, overwrite-on-put hand-off between stages.
#[derive(Debug, Clone)]
pub struct Mailbox<T> {
    slot: Option<T>,
    overwritten: usize,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: None,
            overwritten: 0,
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, value: T) {
        if self.slot.replace(value).is_some() {
            self.overwritten += 1;
        }
    }

    pub fn latest(&self) -> Option<&T> {
        self.slot.as_ref()
    }

    pub fn take(&mut self) -> Option<T> {
        self.slot.take()
    }

    /// Values replaced before anyone took them.
    pub fn overwritten(&self) -> usize {
        self.overwritten
    }
}

/// Sleeps so that successive `wait` calls return once per period.
#[derive(Debug)]
pub struct RateLimiter {
    period: Duration,
    next: Instant,
}

impl RateLimiter {
    pub fn new(rate_hz: f64) -> Self {
        let period = Duration::from_secs_f64(1.0 / rate_hz);
        Self {
            period,
            next: Instant::now() + period,
        }
    }

    pub fn wait(&mut self) {
        let now = Instant::now();
        if self.next > now {
            std::thread::sleep(self.next - now);
            self.next += self.period;
        } else if now - self.next > self.period {
            // fell far behind: restart the schedule rather than burst
            self.next = now + self.period;
        } else {
            self.next += self.period;
        }
    }
}

/// Perception output handed to mapping and control.
#[derive(Debug, Clone)]
pub struct PerceptionSnapshot {
    pub tmap: TraversabilityMap,
    /// Estimated pose at capture.
    pub pose: Pose2D,
    pub time: f64,
}

/// Perception map with gaps filled from world memory: remembered obstacles
/// always win, remembered free space fills unseen cells.
pub fn local_snapshot(tmap: &TraversabilityMap, world: &OccupancyGrid, pose: &Pose2D) -> TraversabilityMap {
    let mut out = tmap.clone();
    let g = &tmap.geometry;
    let wg = &world.geometry;
    // tmap index -> fractional world-grid coordinates is affine
    let to_world = |col: f64, row: f64| {
        let (lx, ly) = g.origin.transform_point((col + 0.5) * g.resolution, (row + 0.5) * g.resolution);
        let (wx, wy) = pose.transform_point(lx, ly);
        wg.world_to_grid_f(wx, wy)
    };
    let base = to_world(0.0, 0.0);
    let (c1, r1) = (to_world(1.0, 0.0), to_world(0.0, 1.0));
    let dcol = (c1.0 - base.0, c1.1 - base.1);
    let drow = (r1.0 - base.0, r1.1 - base.1);
    for row in 0..g.rows {
        for col in 0..g.cols {
            let (c, r) = (col as f64, row as f64);
            let gx = (base.0 + c * dcol.0 + r * drow.0).floor();
            let gy = (base.1 + c * dcol.1 + r * drow.1).floor();
            let class = if wg.contains(gx as i64, gy as i64) {
                world.class_at_index(gy as usize * wg.cols + gx as usize)
            } else {
                CellClass::Unknown
            };
            let cell = &mut out.cells[row * g.cols + col];
            match (class, *cell) {
                (CellClass::Occupied, _) => *cell = TravCell::Obstacle,
                (CellClass::Free, TravCell::Unknown) => *cell = TravCell::Traversable,
                _ => {}
            }
        }
    }
    out
}

fn plan_waypoints(
    world: &OccupancyGrid,
    robot: &RobotParams,
    cfg: &PipelineConfig,
    from: &Pose2D,
    goal: (f64, f64),
) -> Result<Vec<(f64, f64)>, PlanError> {
    match plan_with_margin(world, robot, cfg.plan_margin, cfg, from, goal) {
        Err(PlanError::NoPath | PlanError::StartInvalid | PlanError::GoalInvalid) if cfg.min_plan_margin < cfg.plan_margin => {
            plan_with_margin(world, robot, cfg.min_plan_margin, cfg, from, goal)
        }
        r => r,
    }
}

fn plan_with_margin(
    world: &OccupancyGrid,
    robot: &RobotParams,
    margin: f64,
    cfg: &PipelineConfig,
    from: &Pose2D,
    goal: (f64, f64),
) -> Result<Vec<(f64, f64)>, PlanError> {
    let plan_robot = RobotParams {
        radius: robot.radius + margin,
        ..*robot
    };
    let cm = inflate(world, &plan_robot, cfg.inflation_radius.max(plan_robot.radius))?;
    let g = &cm.geometry;
    let start = g.world_to_grid(from.x, from.y).map_err(|_| PlanError::StartInvalid)?;
    // the robot may stand inside the inflated core after a close pass
    let start = if cm.is_lethal(start) {
        cm.nearest_free(start).ok_or(PlanError::StartInvalid)?
    } else {
        start
    };
    let goal_cell = g.world_to_grid(goal.0, goal.1).map_err(|_| PlanError::GoalInvalid)?;
    let path = plan(&cm, start, goal_cell)?;
    let mut wps = cells_to_world(&shortcut(&path, &cm), g);
    // finish on the exact goal rather than its cell centre
    *wps.last_mut().expect("non-empty path") = goal;
    if wps.len() > 1 {
        wps.remove(0);
    }
    Ok(wps)
}

fn input_for<'a>(tmap: &'a TraversabilityMap, sim: &SimState, target: &Target) -> PolicyInput<'a> {
    PolicyInput {
        tmap,
        twist: sim.robot_twist,
        target_distance: target.distance,
        target_bearing: target.bearing,
        goal_distance: target.goal_distance,
    }
}

/// Mark cells within `radius` of the robot traversable. The robot stands
/// there without touching anything, so blocked cells under it are
/// discretisation or mapping spill. Returns whether anything changed.
pub fn clear_footprint(tmap: &mut TraversabilityMap, radius: f64) -> bool {
    let g = tmap.geometry;
    let half = g.resolution / 2.0;
    let mut changed = false;
    for (i, cell) in tmap.cells.iter_mut().enumerate() {
        if !cell.is_blocked() {
            continue;
        }
        let (cx, cy) = g.cell_center(g.cell_of(i));
        let dx = (cx.abs() - half).max(0.0);
        let dy = (cy.abs() - half).max(0.0);
        if dx * dx + dy * dy < radius * radius {
            *cell = TravCell::Traversable;
            changed = true;
        }
    }
    changed
}

/// Hook that sees every policy invocation.
pub type Observer<'a> = dyn FnMut(&PolicyInput, &Result<Decision, PolicyError>) + 'a;

pub fn run_navigation(sc: &Scenario, cfg: &PipelineConfig, policy: &dyn Policy) -> Result<RunReport, RuntimeError> {
    run_navigation_observed(sc, cfg, policy, &mut |_, _| {})
}

pub fn run_navigation_observed(
    sc: &Scenario,
    cfg: &PipelineConfig,
    policy: &dyn Policy,
    observer: &mut Observer,
) -> Result<RunReport, RuntimeError> {
    cfg.validate()?;
    sc.validate()?;
    let robot = sc.robot;
    let dt = cfg.control_period();
    let perception_every = cfg.every(cfg.perception_rate);
    let replan_every = cfg.every(cfg.replan_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut world = OccupancyGrid::from_scene(&sc.scene, sc.map_resolution);
    let mut sim = SimState {
        robot_pose: sc.start,
        ..SimState::default()
    };
    let mut odometry = DeadReckoning::new(sc.start, 0.0);
    let mut sm = StateMachine {
        state: NavState::Idle,
        log: Vec::new(),
    };
    let mut trajectory = vec![TrajectoryPoint {
        time: 0.0,
        pose: sim.robot_pose,
        twist: sim.robot_twist,
        state: NavState::Idle,
    }];
    let mut ticks = Vec::new();
    let mut decisions = Vec::new();
    let mut mailbox: Mailbox<PerceptionSnapshot> = Mailbox::new();
    let mut limiter = cfg.realtime.then(|| RateLimiter::new(cfg.control_rate));
    let mut replans = 0;

    let finish = |outcome, trajectory, ticks, sm: StateMachine, decisions, waypoints, replans, world| {
        Ok(RunReport {
            outcome,
            trajectory,
            ticks,
            transitions: sm.log,
            decisions,
            waypoints,
            replans,
            world,
        })
    };

    sm.to(0.0, NavState::Planning);
    let mut waypoints = match plan_waypoints(&world, &robot, cfg, &sc.start, sc.goal) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("initial plan failed: {e}");
            sm.to(0.0, NavState::Failed(e.to_string()));
            let outcome = Outcome::Failed(e.to_string());
            return finish(outcome, trajectory, ticks, sm, decisions, Vec::new(), replans, world);
        }
    };
    sm.to(0.0, NavState::Following);
    let mut tracker = WaypointTracker::new(waypoints.clone(), cfg.lookahead);
    let mut recovery_since: Option<f64> = None;
    let mut recovery_replanned = false;
    let mut outcome = Outcome::Timeout;

    for k in 0usize.. {
        let t = k as f64 * dt;
        if t >= cfg.timeout {
            break;
        }
        if let Some(l) = limiter.as_mut() {
            l.wait();
        }
        let tick_start = Instant::now();
        let estimate = match cfg.pose_source {
            PoseSource::GroundTruth => sim.robot_pose,
            PoseSource::DeadReckoning => odometry.pose_at(t).expect("odometry starts at t = 0"),
        };

        let (mut render_s, mut segment_s, mut project_s) = (0.0, 0.0, 0.0);
        if k % perception_every == 0 {
            let t0 = Instant::now();
            let (mut frame, mut labels) =
                render_depth_sampled(&sc.scene, &sim.robot_pose, &sc.camera, sc.seg.column_stride, sc.seg.row_stride);
            apply_noise(&mut frame, &mut labels, &sc.camera, &sc.noise, &mut rng);
            frame.timestamp = t;
            let t1 = Instant::now();
            let classes = segment(&frame, &sc.camera, &sc.seg).expect("frame matches camera");
            let t2 = Instant::now();
            let tmap = project_to_traversability(&classes, &frame, &sc.camera, &sc.seg);
            let t3 = Instant::now();
            render_s = (t1 - t0).as_secs_f64();
            segment_s = (t2 - t1).as_secs_f64();
            project_s = (t3 - t2).as_secs_f64();
            mailbox.put(PerceptionSnapshot {
                tmap,
                pose: estimate,
                time: t,
            });
        }

        let mut replan = |world: &mut OccupancyGrid, sm: &mut StateMachine| {
            if let Some(snap) = mailbox.latest() {
                world.integrate(&snap.tmap, &snap.pose);
            }
            sm.to(t, NavState::Planning);
            let r = plan_waypoints(world, &robot, cfg, &estimate, sc.goal);
            replans += 1;
            r
        };

        if k > 0 && k % replan_every == 0 {
            match replan(&mut world, &mut sm) {
                Ok(w) => {
                    waypoints = w;
                    tracker = WaypointTracker::new(waypoints.clone(), cfg.lookahead);
                }
                Err(e) => log::debug!("periodic replan kept the old route: {e}"),
            }
            sm.to(t, NavState::Following);
        }

        let policy_start = Instant::now();
        let snap = mailbox.latest().expect("perception runs on tick 0");
        let age = t - snap.time;
        let stale = age > cfg.stale_timeout;
        let mut cmd = Twist::ZERO;
        let mut recovering = false;
        let mut terminal: Option<Outcome> = None;
        if !stale {
            let mut local = local_snapshot(&snap.tmap, &world, &snap.pose);
            let target = tracker.update(&estimate);
            let mut decision = policy.decide_detailed(&input_for(&local, &sim, &target), &robot);
            if decision == Err(PolicyError::AllBlocked) && clear_footprint(&mut local, robot.radius + cfg.footprint_margin) {
                decision = policy.decide_detailed(&input_for(&local, &sim, &target), &robot);
            }
            let input = input_for(&local, &sim, &target);
            observer(&input, &decision);
            match decision {
                Ok(d) if d.output.done => {
                    decisions.push((t, d));
                    sm.to(t, NavState::Reached);
                    terminal = Some(Outcome::Reached);
                }
                Ok(d) => {
                    cmd = d.output.cmd;
                    decisions.push((t, d));
                    recovery_since = None;
                    recovery_replanned = false;
                }
                Err(PolicyError::AllBlocked) => {
                    let since = *recovery_since.get_or_insert(t);
                    recovering = true;
                    if t - since >= cfg.recovery_timeout {
                        if recovery_replanned {
                            let reason = "blocked after recovery and replanning".to_string();
                            sm.to(t, NavState::Failed(reason.clone()));
                            terminal = Some(Outcome::Failed(reason));
                        } else {
                            match replan(&mut world, &mut sm) {
                                Ok(w) => {
                                    waypoints = w;
                                    tracker = WaypointTracker::new(waypoints.clone(), cfg.lookahead);
                                    sm.to(t, NavState::Following);
                                    recovery_replanned = true;
                                    recovery_since = Some(t);
                                }
                                Err(e) => {
                                    sm.to(t, NavState::Failed(e.to_string()));
                                    terminal = Some(Outcome::Failed(e.to_string()));
                                }
                            }
                        }
                    }
                    if terminal.is_none() {
                        cmd = recovery(&input, &robot).cmd;
                    }
                }
                Err(e) => {
                    sm.to(t, NavState::Failed(e.to_string()));
                    terminal = Some(Outcome::Failed(e.to_string()));
                }
            }
        }
        let policy_s = policy_start.elapsed().as_secs_f64();

        if terminal.is_none() {
            sim = step_sim(&sim, &cmd, dt, &robot);
            odometry.advance(&sim.robot_twist, dt);
            if check_collision(&sc.scene, &sim.robot_pose, &robot) {
                terminal = Some(Outcome::Collision);
            }
        }
        ticks.push(TickRecord {
            tick: k,
            time: t,
            render: render_s,
            segment: segment_s,
            project: project_s,
            policy: policy_s,
            total: tick_start.elapsed().as_secs_f64(),
            cmd,
            perception_age: age,
            stale,
            recovering,
            state: sm.state.clone(),
        });
        trajectory.push(TrajectoryPoint {
            time: t + dt,
            pose: sim.robot_pose,
            twist: if terminal.is_some() && sm.state.is_terminal() { Twist::ZERO } else { sim.robot_twist },
            state: sm.state.clone(),
        });
        if let Some(o) = terminal {
            outcome = o;
            break;
        }
    }
    log::info!("run finished: {outcome} after {} ticks, {replans} replans", ticks.len());
    finish(outcome, trajectory, ticks, sm, decisions, waypoints, replans, world)
}

pub fn trajectory_csv(report: &RunReport) -> String {
    let mut s = String::from("time,x,y,theta,v,omega,state\n");
    for p in &report.trajectory {
        let _ = writeln!(
            s,
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            p.time,
            p.pose.x,
            p.pose.y,
            p.pose.theta,
            p.twist.v,
            p.twist.omega,
            p.state.name()
        );
    }
    s
}

/// Latency columns are wall-clock measurements and vary between runs.
pub fn ticks_csv(report: &RunReport) -> String {
    let mut s = String::from("tick,time,render_s,segment_s,project_s,policy_s,total_s,v,omega,perception_age,state\n");
    for r in &report.ticks {
        let _ = writeln!(
            s,
            "{},{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{}",
            r.tick,
            r.time,
            r.render,
            r.segment,
            r.project,
            r.policy,
            r.total,
            r.cmd.v,
            r.cmd.omega,
            r.perception_age,
            r.state.name()
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub mean: f64,
    pub p95: f64,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { mean: 0.0, p95: 0.0 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Self {
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            p95: sorted[rank - 1],
        }
    }

    pub fn rate(&self) -> f64 {
        if self.mean > 0.0 {
            1.0 / self.mean
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub n_ticks: usize,
    pub render: StageStats,
    pub segment: StageStats,
    pub project: StageStats,
    pub policy: StageStats,
    /// Segment plus project per tick.
    pub perception: StageStats,
    /// Segment, project and policy per tick.
    pub chain: StageStats,
    pub wall_time: f64,
    /// `n_ticks / wall_time` over the timed chain.
    pub achieved_rate: f64,
}

pub const MIN_BENCH_TICKS: usize = 100;
const BENCH_FRAMES: usize = 24;

/// Time the perception-to-command chain flat out on pre-rendered frames
/// taken along the straight line from start to goal.
pub fn bench(sc: &Scenario, policy: &dyn Policy, n_ticks: usize) -> Result<BenchReport, RuntimeError> {
    if n_ticks < MIN_BENCH_TICKS {
        return Err(RuntimeError::Config(format!("bench needs at least {MIN_BENCH_TICKS} ticks, got {n_ticks}")));
    }
    sc.validate()?;
    let robot = sc.robot;
    let world = OccupancyGrid::from_scene(&sc.scene, sc.map_resolution);
    let (dx, dy) = (sc.goal.0 - sc.start.x, sc.goal.1 - sc.start.y);
    let heading = dy.atan2(dx);
    let length = dx.hypot(dy);
    let mut frames = Vec::with_capacity(BENCH_FRAMES);
    let mut render_times = Vec::with_capacity(BENCH_FRAMES);
    for i in 0..BENCH_FRAMES {
        let s = length * i as f64 / BENCH_FRAMES as f64;
        let pose = Pose2D::new(sc.start.x + s * heading.cos(), sc.start.y + s * heading.sin(), heading);
        let t0 = Instant::now();
        let (frame, _) = render_depth(&sc.scene, &pose, &sc.camera);
        render_times.push(t0.elapsed().as_secs_f64());
        frames.push((pose, frame));
    }

    let (mut seg, mut proj, mut pol, mut perc, mut chain) = (
        Vec::with_capacity(n_ticks),
        Vec::with_capacity(n_ticks),
        Vec::with_capacity(n_ticks),
        Vec::with_capacity(n_ticks),
        Vec::with_capacity(n_ticks),
    );
    let wall = Instant::now();
    for k in 0..n_ticks {
        let (pose, frame) = &frames[k % frames.len()];
        let t0 = Instant::now();
        let classes = segment(frame, &sc.camera, &sc.seg).expect("frame matches camera");
        let t1 = Instant::now();
        let tmap = project_to_traversability(&classes, frame, &sc.camera, &sc.seg);
        let t2 = Instant::now();
        let local = local_snapshot(&tmap, &world, pose);
        let (lx, ly) = pose.inverse_transform_point(sc.goal.0, sc.goal.1);
        let input = PolicyInput {
            tmap: &local,
            twist: Twist::new(0.5 * robot.v_max, 0.0),
            target_distance: lx.hypot(ly),
            target_bearing: ly.atan2(lx),
            goal_distance: lx.hypot(ly),
        };
        let out = policy.decide(&input, &robot);
        std::hint::black_box(&out);
        let t3 = Instant::now();
        seg.push((t1 - t0).as_secs_f64());
        proj.push((t2 - t1).as_secs_f64());
        pol.push((t3 - t2).as_secs_f64());
        perc.push((t2 - t0).as_secs_f64());
        chain.push((t3 - t0).as_secs_f64());
    }
    let wall_time = wall.elapsed().as_secs_f64();
    Ok(BenchReport {
        n_ticks,
        render: StageStats::from_samples(&render_times),
        segment: StageStats::from_samples(&seg),
        project: StageStats::from_samples(&proj),
        policy: StageStats::from_samples(&pol),
        perception: StageStats::from_samples(&perc),
        chain: StageStats::from_samples(&chain),
        wall_time,
        achieved_rate: n_ticks as f64 / wall_time,
    })
}

pub fn bench_csv(r: &BenchReport) -> String {
    let mut s = String::from("stage,mean_s,p95_s,rate_hz\n");
    for (name, st) in [
        ("render", r.render),
        ("segment", r.segment),
        ("project", r.project),
        ("policy", r.policy),
        ("perception", r.perception),
        ("chain", r.chain),
    ] {
        let _ = writeln!(s, "{name},{:.6},{:.6},{:.2}", st.mean, st.p95, st.rate());
    }
    let _ = writeln!(s, "loop,{:.6},,{:.2}", r.wall_time / r.n_ticks as f64, r.achieved_rate);
    s
}
