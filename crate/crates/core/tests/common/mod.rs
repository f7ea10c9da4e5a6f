//! Property suites shared by `properties.rs` and `acceptance.rs`. Each runs
//! a proptest runner and returns the first failure as a message.

use std::f64::consts::PI;

use groundnav_core::geometry::{unicycle_step, Cell, GridGeometry, Pose2D, Twist};
use groundnav_core::mapping::{load_map, save_map, CellClass, OccupancyGrid};
use groundnav_core::runtime::{run_navigation, PipelineConfig};
use groundnav_core::simenv::{random_scenario, RandomScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub type SuiteResult = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn pose() -> impl Strategy<Value = Pose2D> {
    (-10.0..10.0f64, -10.0..10.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
}

fn close(a: &Pose2D, b: &Pose2D, tol: f64) -> bool {
    (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && (a.theta - b.theta).sin().abs() < tol
}

/// World/grid conversions and SE(2) inverse round trips.
pub fn geometry_round_trips(cases: u32) -> SuiteResult {
    let grid = (0usize..300, 0usize..200, pose(), 0.01..0.5f64);
    runner(cases)
        .run(&(grid, pose(), pose()), |((col, row, origin, res), a, b)| {
            let g = GridGeometry::new(res, origin, 300, 200).unwrap();
            let (x, y) = g.grid_to_world(col, row).unwrap();
            prop_assert_eq!(g.world_to_grid(x, y).unwrap(), Cell::new(col, row));
            prop_assert!(close(&a.compose(&a.inverse()), &Pose2D::identity(), 1e-9));
            prop_assert!(close(&a.compose(&b).compose(&b.inverse()), &a, 1e-9));
            let (px, py) = a.transform_point(b.x, b.y);
            let (qx, qy) = a.inverse_transform_point(px, py);
            prop_assert!((qx - b.x).abs() < 1e-9 && (qy - b.y).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// An arc at rate w deviates from the straight step by at most v |w| dt^2 / 2,
/// on both sides of the straight-line switch.
pub fn unicycle_continuity(cases: u32) -> SuiteResult {
    let rate = (-9.0..-3.0f64, any::<bool>()).prop_map(|(e, s)| if s { 10f64.powf(e) } else { -(10f64.powf(e)) });
    runner(cases)
        .run(&(pose(), 0.0..1.0f64, 0.001..1.0f64, rate), |(p, v, dt, w)| {
            let arc = unicycle_step(&p, &Twist::new(v, w), dt);
            let line = unicycle_step(&p, &Twist::new(v, 0.0), dt);
            let gap = (arc.x - line.x).hypot(arc.y - line.y);
            prop_assert!(gap <= 0.5 * v * w.abs() * dt * dt + 1e-9, "gap {} at w {}", gap, w);
            prop_assert!((arc.theta - line.theta).sin().abs() <= w.abs() * dt + 1e-12);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Hits and misses that never reach the clamp commute.
pub fn logodds_order_independence(cases: u32) -> SuiteResult {
    let seq = (0usize..=10, 0usize..=20).prop_flat_map(|(h, m)| {
        let obs: Vec<bool> = std::iter::repeat_n(true, h).chain(std::iter::repeat_n(false, m)).collect();
        (Just(obs.clone()), Just(obs).prop_shuffle())
    });
    runner(cases)
        .run(&seq, |(sorted, shuffled)| {
            let g = GridGeometry::new(0.05, Pose2D::identity(), 1, 1).unwrap();
            let (mut a, mut b) = (OccupancyGrid::new(g), OccupancyGrid::new(g));
            let c = Cell::new(0, 0);
            for &o in &sorted {
                a.observe(c, o);
            }
            for &o in &shuffled {
                b.observe(c, o);
            }
            let hits = sorted.iter().filter(|&&o| o).count() as f64;
            let expect = 0.85 * hits - 0.41 * (sorted.len() as f64 - hits);
            prop_assert_eq!(a.logodds(c), b.logodds(c));
            prop_assert!((a.logodds(c) - expect).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// save_map then load_map keeps geometry and every cell class.
pub fn map_round_trip(cases: u32) -> SuiteResult {
    let map = (1usize..40, 1usize..30, 0.01..0.5f64, -5.0..5.0f64, -5.0..5.0f64)
        .prop_flat_map(|(c, r, res, ox, oy)| (Just((c, r, res, ox, oy)), prop::collection::vec(0u8..3, c * r)));
    runner(cases)
        .run(&map, |((cols, rows, res, ox, oy), classes)| {
            let g = GridGeometry::new(res, Pose2D::new(ox, oy, 0.0), cols, rows).unwrap();
            let mut grid = OccupancyGrid::new(g);
            for (i, &k) in classes.iter().enumerate() {
                let class = [CellClass::Free, CellClass::Occupied, CellClass::Unknown][k as usize];
                grid.set_class(g.cell_of(i), class);
            }
            let (pgm, meta) = save_map(&grid);
            let back = load_map(&pgm, &meta).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(back.geometry.cols, cols);
            prop_assert_eq!(back.geometry.rows, rows);
            prop_assert!((back.geometry.resolution - res).abs() < 1e-12);
            prop_assert!((back.geometry.origin.x - ox).abs() < 1e-9 && (back.geometry.origin.y - oy).abs() < 1e-9);
            prop_assert_eq!(back.classes(), grid.classes());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Every recorded transition is in the legal set, transitions chain, and a
/// run ends in a terminal state exactly when it was not cut off.
pub fn transition_legality(cases: u32) -> SuiteResult {
    runner(cases)
        .run(&(0u64..10_000, 2.0..20.0f64), |(seed, timeout)| {
            let sc = random_scenario(seed, &RandomScenarioConfig::default());
            let cfg = PipelineConfig {
                timeout,
                ..PipelineConfig::default()
            };
            let r = run_navigation(&sc, &cfg, &cfg.rule_policy()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(!r.transitions.is_empty());
            prop_assert_eq!(r.transitions[0].from.name(), "idle");
            for w in r.transitions.windows(2) {
                prop_assert_eq!(&w[0].to, &w[1].from);
                prop_assert!(w[0].time <= w[1].time);
            }
            for t in &r.transitions {
                prop_assert!(t.from.can_transition(&t.to), "illegal {} -> {}", t.from, t.to);
            }
            let last = &r.transitions.last().unwrap().to;
            let cut_off = matches!(r.outcome, groundnav_core::runtime::Outcome::Timeout | groundnav_core::runtime::Outcome::Collision);
            prop_assert_eq!(last.is_terminal(), !cut_off, "outcome {} last state {}", r.outcome, last);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// A tick is stale exactly when its perception is older than the timeout,
/// and a stale tick always commands zero velocity.
pub fn freshness_watchdog(cases: u32) -> SuiteResult {
    runner(cases)
        .run(&(0u64..10_000, 1.0..18.0f64, 0.06..1.0f64), |(seed, rate, stale_timeout)| {
            let sc = random_scenario(seed, &RandomScenarioConfig::default());
            let cfg = PipelineConfig {
                perception_rate: rate,
                stale_timeout,
                timeout: 4.0,
                ..PipelineConfig::default()
            };
            let r = run_navigation(&sc, &cfg, &cfg.rule_policy()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for t in &r.ticks {
                prop_assert!(t.perception_age >= 0.0);
                prop_assert_eq!(t.stale, t.perception_age > stale_timeout);
                if t.stale {
                    prop_assert!(t.cmd.is_zero(), "stale tick {} commanded {:?}", t.tick, t.cmd);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
