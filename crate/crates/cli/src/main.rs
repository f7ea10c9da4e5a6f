//! `groundnav`: segmentation demos, planning, closed-loop navigation runs,
//! policy training, throughput benchmarks and gradient checks.
//!
//! Exit status: 0 success, 1 failed check, 2 bad input, 3 I/O error,
//! 4 no path, 5 collision, 6 timeout, 7 navigation failed.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use groundnav_core::geometry::{Pose2D, RobotParams};
use groundnav_core::globalplanner::{cells_csv, inflate, plan, render_overlay, shortcut, PlanError};
use groundnav_core::groundseg::{project_to_traversability, segment};
use groundnav_core::localplanner::{decision_log_csv, Policy};
use groundnav_core::mapping::{load_map, OccupancyGrid};
use groundnav_core::policylearn::{
    collect_dataset, grad_check, random_triple, train, Mlp, MlpPolicy, TrainParams, LAYER_SIZES,
};
use groundnav_core::runtime::{
    bench, bench_csv, run_navigation, ticks_csv, trajectory_csv, Outcome, PipelineConfig, PoseSource,
};
use groundnav_core::simenv::{
    apply_noise, load_scenario, random_scenario, render_depth, score_segmentation, RandomScenarioConfig, Scenario,
};

#[derive(Parser, Debug)]
#[command(name = "groundnav", version, about = "Depth-camera ground segmentation and navigation in a 2.5D simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one frame, segment it and score it against the simulator labels.
    Segment(SegmentArgs),
    /// Plan a route on a stored occupancy map.
    Plan(PlanArgs),
    /// Run one closed-loop navigation episode.
    Navigate(NavigateArgs),
    /// Clone the rule policy into a small network.
    Train(TrainArgs),
    /// Time the perception-to-command chain.
    Bench(BenchArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Noise seed; defaults to the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Camera pose `x y theta`; defaults to the scenario start.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "THETA"], allow_negative_numbers = true)]
    pose: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Map image; the sidecar is the same path with a `.meta` extension.
    #[arg(long)]
    map: PathBuf,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
    start: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
    goal: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Lethal radius (m).
    #[arg(long, default_value_t = RobotParams::default().radius)]
    radius: f64,
    /// Outer edge of the soft-cost band (m).
    #[arg(long, default_value_t = 0.45)]
    inflation: f64,
}

#[derive(Args, Debug)]
struct NavigateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `rule` or `learned:<weight file>`.
    #[arg(long, default_value = "rule")]
    policy: String,
    /// Simulated seconds.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Pace control ticks against the wall clock.
    #[arg(long)]
    realtime: bool,
    /// Navigate on integrated odometry instead of the true pose.
    #[arg(long)]
    dead_reckoning: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    /// Expert runs on this many random scenarios (ignored with --scenario).
    #[arg(long, default_value_t = 100)]
    scenarios: usize,
    /// Use these scenario files instead of random ones.
    #[arg(long = "scenario")]
    scenario_files: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Scenario to take frames from; a random one if omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    ticks: usize,
    #[arg(long, default_value = "rule")]
    policy: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    triples: usize,
}

/// Gradient check acceptance bound.
const GRAD_TOLERANCE: f64 = 1e-4;
const TARGET_RATE_HZ: f64 = 18.0;

#[derive(Debug)]
enum Failure {
    Check(String),
    Input(String),
    Io(String),
    NoPath(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Input(_) => 2,
            Failure::Io(_) => 3,
            Failure::NoPath(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Input(m) | Failure::Io(m) | Failure::NoPath(m) => m,
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn read_text(path: &FsPath) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_scenario(path: &FsPath) -> Result<Scenario, Failure> {
    let sc = load_scenario(&read_text(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    sc.validate().map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(sc)
}

fn load_policy(spec: &str, cfg: &PipelineConfig) -> Result<Box<dyn Policy>, Failure> {
    if spec == "rule" {
        return Ok(Box::new(cfg.rule_policy()));
    }
    let Some(path) = spec.strip_prefix("learned:") else {
        return Err(Failure::Input(format!("unknown policy `{spec}` (expected `rule` or `learned:<file>`)")));
    };
    let text = read_text(FsPath::new(path))?;
    let net = Mlp::from_weight_file(&text).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
    if net.sizes() != LAYER_SIZES {
        return Err(Failure::Input(format!("{path}: layer sizes {:?}, expected {:?}", net.sizes(), LAYER_SIZES)));
    }
    let mut p = MlpPolicy::new(net);
    p.goal_tolerance = cfg.rule_policy().params.goal_tolerance;
    Ok(Box::new(p))
}

/// Collects artifacts and writes them only once everything has been computed.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new(dir: &FsPath) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn write(self) -> Result<(), Failure> {
        let io = |p: &FsPath, e: std::io::Error| Failure::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        for (name, bytes) in &self.files {
            let p = self.dir.join(name);
            fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

fn cmd_segment(a: &SegmentArgs) -> CmdResult {
    let sc = read_scenario(&a.scenario)?;
    let pose = match &a.pose {
        Some(p) => Pose2D::new(p[0], p[1], p[2]),
        None => sc.start,
    };
    let (mut frame, mut labels) = render_depth(&sc.scene, &pose, &sc.camera);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(sc.seed));
    apply_noise(&mut frame, &mut labels, &sc.camera, &sc.noise, &mut rng);
    let classes = segment(&frame, &sc.camera, &sc.seg).map_err(input_err)?;
    let tmap = project_to_traversability(&classes, &frame, &sc.camera, &sc.seg);
    let score = score_segmentation(&classes, &labels, &sc.seg);
    let mut out = Artifacts::new(&a.out);
    out.add("depth.pgm", frame.to_pgm16_mm());
    out.add("classes.ppm", classes.to_ppm());
    out.add("traversability.pgm", tmap.to_pgm());
    out.add(
        "accuracy.txt",
        format!(
            "sampled = {}\nagreed = {}\naccuracy = {:.6}\nobstacle_as_ground = {}\n",
            score.sampled,
            score.agreed,
            score.accuracy(),
            score.obstacle_as_ground
        ),
    );
    out.write()?;
    println!("accuracy {:.4} ({} of {} sampled pixels)", score.accuracy(), score.agreed, score.sampled);
    Ok(0)
}

fn sidecar_path(map: &FsPath) -> PathBuf {
    map.with_extension("meta")
}

fn cmd_plan(a: &PlanArgs) -> CmdResult {
    let pgm = fs::read(&a.map).map_err(|e| Failure::Input(format!("{}: {e}", a.map.display())))?;
    let meta = read_text(&sidecar_path(&a.map))?;
    let grid: OccupancyGrid = load_map(&pgm, &meta).map_err(|e| Failure::Input(format!("{}: {e}", a.map.display())))?;
    let robot = RobotParams {
        radius: a.radius,
        ..RobotParams::default()
    };
    let cm = inflate(&grid, &robot, a.inflation).map_err(input_err)?;
    let g = &cm.geometry;
    let cell = |xy: &[f64], what: &str| {
        g.world_to_grid(xy[0], xy[1])
            .map_err(|_| Failure::Input(format!("{what} ({}, {}) is outside the map", xy[0], xy[1])))
    };
    let (start, goal) = (cell(&a.start, "start")?, cell(&a.goal, "goal")?);
    let path = match plan(&cm, start, goal) {
        Ok(p) => p,
        Err(PlanError::NoPath) => return Err(Failure::NoPath("goal is unreachable".into())),
        Err(e) => return Err(input_err(e)),
    };
    let waypoints = shortcut(&path, &cm);
    let mut out = Artifacts::new(&a.out);
    out.add("path.csv", cells_csv(&path.cells, g));
    out.add("waypoints.csv", cells_csv(&waypoints, g));
    out.add("overlay.pgm", render_overlay(&grid, &path.cells, &waypoints));
    out.write()?;
    println!("total_cost = {:.12}", path.total_cost);
    println!("cells = {}, waypoints = {}", path.cells.len(), waypoints.len());
    Ok(0)
}

fn outcome_code(o: &Outcome) -> u8 {
    match o {
        Outcome::Reached => 0,
        Outcome::Collision => 5,
        Outcome::Timeout => 6,
        Outcome::Failed(_) => 7,
    }
}

fn cmd_navigate(a: &NavigateArgs) -> CmdResult {
    let mut sc = read_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let cfg = PipelineConfig {
        timeout: a.timeout,
        realtime: a.realtime,
        pose_source: if a.dead_reckoning { PoseSource::DeadReckoning } else { PoseSource::GroundTruth },
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(input_err)?;
    let policy = load_policy(&a.policy, &cfg)?;
    let report = run_navigation(&sc, &cfg, policy.as_ref()).map_err(input_err)?;
    let (world_pgm, world_meta) = (report.world.to_pgm(), report.world.meta_text());
    let mut out = Artifacts::new(&a.out);
    out.add("trajectory.csv", trajectory_csv(&report));
    out.add("ticks.csv", ticks_csv(&report));
    out.add("decisions.csv", decision_log_csv(&report.decisions));
    out.add("map.pgm", world_pgm);
    out.add("map.meta", world_meta);
    out.write()?;
    let end = report.final_pose();
    println!(
        "{}: {} ticks, {} replans, final pose ({:.3}, {:.3}, {:.3}), goal distance {:.3}",
        report.outcome,
        report.ticks.len(),
        report.replans,
        end.x,
        end.y,
        end.theta,
        end.distance_to(sc.goal.0, sc.goal.1)
    );
    Ok(outcome_code(&report.outcome))
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let hp = TrainParams {
        lr: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainParams::default()
    };
    if !(hp.lr > 0.0 && hp.lr.is_finite()) || hp.batch == 0 {
        return Err(Failure::Input("--lr must be positive and --batch at least 1".into()));
    }
    let scenarios: Vec<Scenario> = if a.scenario_files.is_empty() {
        if a.scenarios == 0 {
            return Err(Failure::Input("--scenarios must be at least 1".into()));
        }
        let rc = RandomScenarioConfig::default();
        (0..a.scenarios as u64).map(|i| random_scenario(i, &rc)).collect()
    } else {
        a.scenario_files.iter().map(|p| read_scenario(p)).collect::<Result<_, _>>()?
    };
    let cfg = PipelineConfig::default();
    let data = collect_dataset(&scenarios, &cfg.rule_policy(), &cfg, a.seed).map_err(input_err)?;
    info!("collected {} samples from {} scenarios", data.len(), scenarios.len());
    let robot = scenarios[0].robot;
    let (net, curve) = train(&data, &robot, &hp).map_err(|e| Failure::Check(e.to_string()))?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        loss.push_str(&format!("{},{:.9e}\n", i + 1, l));
    }
    let mut out = Artifacts::new(&a.out);
    out.add("policy.mlpw", net.to_weight_file());
    out.add("loss.csv", loss);
    out.write()?;
    match curve.last() {
        Some(l) => println!("{} samples, final loss {l:.6e}", data.len()),
        None => println!("{} samples, no epochs run", data.len()),
    }
    Ok(0)
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let sc = match &a.scenario {
        Some(p) => read_scenario(p)?,
        None => random_scenario(a.seed, &RandomScenarioConfig::default()),
    };
    let cfg = PipelineConfig::default();
    let policy = load_policy(&a.policy, &cfg)?;
    let report = bench(&sc, policy.as_ref(), a.ticks).map_err(input_err)?;
    let mut out = Artifacts::new(&a.out);
    out.add("bench.csv", bench_csv(&report));
    out.write()?;
    println!(
        "achieved {:.1} Hz over {} ticks ({:.1}x the {TARGET_RATE_HZ} Hz target); perception {:.1} Hz, policy {:.1} Hz, render {:.1} Hz",
        report.achieved_rate,
        report.n_ticks,
        report.achieved_rate / TARGET_RATE_HZ,
        report.perception.rate(),
        report.policy.rate(),
        report.render.rate()
    );
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CmdResult {
    if a.triples == 0 {
        return Err(Failure::Input("--triples must be at least 1".into()));
    }
    let worst = (0..a.triples as u64)
        .map(|i| {
            let (net, x, t) = random_triple(a.seed.wrapping_add(i));
            grad_check(&net, &x, &t)
        })
        .fold(0.0f64, f64::max);
    println!("max_rel_error = {worst:.3e}");
    if worst <= GRAD_TOLERANCE {
        Ok(0)
    } else {
        Err(Failure::Check(format!("gradient error {worst:.3e} exceeds {GRAD_TOLERANCE:e}")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GROUNDNAV_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Navigate(a) => cmd_navigate(a),
        Command::Train(a) => cmd_train(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
