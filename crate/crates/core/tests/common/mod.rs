//! Invariants of the weight computation and of seeded runs, shared by the
//! property tests and the acceptance suite.

#![allow(dead_code)]

use std::ops::RangeInclusive;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use rand::Rng;

use csg::bench::{quadratic_problem, run_rate_runs, ExperimentConfig, ProblemKind, RunRecord};
use csg::csg::{run_csg, CsgConfig, LogSchedule};
use csg::history::History;
use csg::measures::{rng_stream, MeasureSpec};
use csg::metric::ProductMetric;
use csg::neighbors::{brute_nearest, BlockNorm, Neighbors};
use csg::weights::{empirical_weights, exact_weights_grid, grid_rule, mc_weights, nearest_index, Cells, WeightScheme};

/// Largest record count in the brute-force comparisons.
pub const MAX_RECORDS: usize = 50;

/// Records on a coarse lattice, so that equal distances are common and the
/// tie rule gets exercised.
pub fn lattice(dim: usize, n: RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(move |n| {
        (
            prop::collection::vec((0..5u8).prop_map(|v| v as f64 * 0.25), n * dim),
            prop::collection::vec((0..3u8).prop_map(|v| v as f64 * 0.5), n),
        )
    })
}

pub fn scattered(dim: usize, n: RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(move |n| (prop::collection::vec(-1.0..1.0f64, n * dim), prop::collection::vec(0.0..0.5f64, n)))
}

fn records(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop_oneof![lattice(dim, 1..=MAX_RECORDS), scattered(dim, 1..=MAX_RECORDS)]
}

pub fn norms() -> impl Strategy<Value = BlockNorm> {
    prop_oneof![
        (prop::sample::select(vec![1usize, 2, 3, 5, 11, 16]), 0.1..10.0f64).prop_map(|(d, c)| BlockNorm::single(d, c)),
        (1..4usize, 1..4usize, 0.1..10.0f64, 0.1..10.0f64).prop_map(|(a, b, ca, cb)| BlockNorm::new(vec![(a, ca), (b, cb)])),
    ]
}

/// Block norm, points and offsets.
pub type RecordSet = (BlockNorm, Vec<f64>, Vec<f64>);

pub fn record_sets() -> impl Strategy<Value = RecordSet> {
    norms().prop_flat_map(|norm| {
        let d = norm.dim();
        records(d).prop_map(move |(p, o)| (norm.clone(), p, o))
    })
}

/// Owner masses by linear scan, ties to the smaller index.
pub fn brute_weights(norm: &BlockNorm, points: &[f64], offsets: &[f64], queries: &[f64], masses: Option<&[f64]>) -> Vec<f64> {
    let mut w = vec![0.0; offsets.len()];
    let m = queries.len() / norm.dim();
    for (i, q) in queries.chunks_exact(norm.dim()).enumerate() {
        let (k, _) = brute_nearest(norm, points, offsets, q, None).expect("nonempty record set");
        w[k] += masses.map_or(1.0 / m as f64, |ms| ms[i]);
    }
    w
}

pub fn same_context_history(points: &[f64], designs: &[f64], dim: usize) -> History {
    let mut h = History::new(1, dim, 1);
    for (x, u) in points.chunks_exact(dim).zip(designs) {
        h.push(&[*u], x, Some(&[0.0]), &[0.0]).expect("consistent record");
    }
    h
}

fn assert_close(a: &[f64], b: &[f64]) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        prop_assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
    }
    Ok(())
}

fn assert_distribution(w: &[f64]) -> Result<(), TestCaseError> {
    prop_assert!(w.iter().all(|&v| v >= 0.0), "negative weight in {w:?}");
    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "weights sum to {}", w.iter().sum::<f64>());
    Ok(())
}

pub fn tree_input() -> impl Strategy<Value = (RecordSet, u64)> {
    (record_sets(), 0..1000u64)
}

pub fn tree_matches_linear_scan(((norm, points, offsets), seed): (RecordSet, u64)) -> Result<(), TestCaseError> {
    let tree = Neighbors::new(&norm, &points, &offsets);
    let d = norm.dim();
    let mut rng = rng_stream(seed, 0);
    let queries: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            if i < 4 {
                points[(i % tree.len()) * d..][..d].to_vec()
            } else {
                (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect()
            }
        })
        .collect();
    for q in &queries {
        prop_assert_eq!(tree.nearest(q), brute_nearest(&norm, &points, &offsets, q, None));
        for skip in [0, tree.len() / 2] {
            prop_assert_eq!(tree.nearest_excluding(q, skip), brute_nearest(&norm, &points, &offsets, q, Some(skip)));
        }
    }
    for k in 0..tree.len() {
        let got = tree.nearest_from_record(k);
        prop_assert_eq!(Some(got), brute_nearest(&norm, &points, &offsets, &points[k * d..][..d], None));
    }
    Ok(())
}

pub fn empirical_weights_match_brute_force((norm, points, offsets): RecordSet) -> Result<(), TestCaseError> {
    let cells = Cells::new(norm.clone(), &points, offsets.clone(), None);
    let w = cells.empirical();
    assert_distribution(w.as_slice())?;
    assert_close(w.as_slice(), &brute_weights(&norm, &points, &offsets, &points, None))
}

pub type GridInput = ((Vec<f64>, Vec<f64>), f64, f64, f64);

pub fn grid_input() -> impl Strategy<Value = GridInput> {
    (records(2), 0.1..10.0f64, 0.1..10.0f64, -1.0..1.0f64)
}

pub fn grid_weights_match_brute_force(((points, designs), c_u, c_x, u_n): GridInput) -> Result<(), TestCaseError> {
    let measure = MeasureSpec::uniform(vec![-1.0; 2], vec![1.0; 2]).unwrap();
    let metric = ProductMetric::design_point(1, 2, c_u, c_x).unwrap();
    let h = same_context_history(&points, &designs, 2);
    let w = exact_weights_grid(&h, &[u_n], &metric, &measure, 12).unwrap();
    assert_distribution(w.as_slice())?;
    let offsets: Vec<f64> = designs.iter().map(|u| c_u * (u - u_n).abs()).collect();
    let rule = grid_rule(&measure, 12).unwrap();
    let brute = brute_weights(&BlockNorm::single(2, c_x), &points, &offsets, rule.nodes(), Some(rule.masses()));
    assert_close(w.as_slice(), &brute)
}

pub type SweepInput = ((Vec<f64>, Vec<f64>), f64, f64);

pub fn sweep_input() -> impl Strategy<Value = SweepInput> {
    (records(1), 0.1..10.0f64, -1.0..1.0f64)
}

/// One-dimensional histories go through the sorted sweep instead of the tree.
pub fn sweep_matches_brute_force(((points, designs), c_u, u_n): SweepInput) -> Result<(), TestCaseError> {
    let metric = ProductMetric::design_point(1, 1, c_u, 1.0).unwrap();
    let h = same_context_history(&points, &designs, 1);
    let offsets: Vec<f64> = designs.iter().map(|u| c_u * (u - u_n).abs()).collect();
    let norm = BlockNorm::single(1, 1.0);
    let w = empirical_weights(&h, &[u_n], &metric).unwrap();
    assert_distribution(w.as_slice())?;
    assert_close(w.as_slice(), &brute_weights(&norm, &points, &offsets, &points, None))?;

    let measure = MeasureSpec::uniform(vec![-1.0], vec![1.0]).unwrap();
    let w = exact_weights_grid(&h, &[u_n], &metric, &measure, 64).unwrap();
    assert_distribution(w.as_slice())?;
    let rule = grid_rule(&measure, 64).unwrap();
    assert_close(w.as_slice(), &brute_weights(&norm, &points, &offsets, rule.nodes(), Some(rule.masses())))
}

pub type McInput = ((Vec<f64>, Vec<f64>), f64, usize, u64);

pub fn mc_input() -> impl Strategy<Value = McInput> {
    (scattered(3, 1..=MAX_RECORDS), -1.0..1.0f64, 1..500usize, 0..1000u64)
}

pub fn mc_weights_are_a_distribution(((points, designs), u_n, m, seed): McInput) -> Result<(), TestCaseError> {
    let measure = MeasureSpec::uniform(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let metric = ProductMetric::design_point(1, 3, 1.0, 1.0).unwrap();
    let h = same_context_history(&points, &designs, 3);
    let w = mc_weights(&h, &[u_n], &metric, &measure, m, &mut rng_stream(seed, 0)).unwrap();
    assert_distribution(w.as_slice())?;
    let again = mc_weights(&h, &[u_n], &metric, &measure, m, &mut rng_stream(seed, 0)).unwrap();
    prop_assert_eq!(w, again);
    Ok(())
}

pub type ScalingInput = ((Vec<f64>, Vec<f64>), Vec<f64>, f64, f64, f64);

pub fn scaling_input() -> impl Strategy<Value = ScalingInput> {
    (scattered(2, 1..=MAX_RECORDS), prop::collection::vec(-1.0..1.0f64, 3), 0.1..10.0f64, 0.1..10.0f64, 0.01..100.0f64)
}

/// Multiplying every coefficient by the same factor leaves the nearest
/// record, and hence every weight, unchanged.
pub fn metric_scaling_keeps_the_argmin(((points, designs), q, c_u, c_x, factor): ScalingInput) -> Result<(), TestCaseError> {
    let metric = ProductMetric::design_point(1, 2, c_u, c_x).unwrap();
    let scaled = metric.scaled(factor).unwrap();
    let h = same_context_history(&points, &designs, 2);
    prop_assert_eq!(nearest_index(&h, &q, &metric).unwrap(), nearest_index(&h, &q, &scaled).unwrap());
    prop_assert_eq!(empirical_weights(&h, &q[..1], &metric).unwrap(), empirical_weights(&h, &q[..1], &scaled).unwrap());
    Ok(())
}

pub type TieInput = ((Vec<f64>, Vec<f64>), Vec<f64>, i32);

pub fn tie_input() -> impl Strategy<Value = TieInput> {
    (lattice(2, 1..=MAX_RECORDS), prop::collection::vec((0..5u8).prop_map(|v| v as f64 * 0.25), 3), -6..7i32)
}

/// With a power of two the scaled distances are exact, so ties survive too.
pub fn power_of_two_scaling_keeps_ties(((points, designs), q, exponent): TieInput) -> Result<(), TestCaseError> {
    let metric = ProductMetric::design_point(1, 2, 1.0, 1.0).unwrap();
    let scaled = metric.scaled(2f64.powi(exponent)).unwrap();
    let h = same_context_history(&points, &designs, 2);
    prop_assert_eq!(nearest_index(&h, &q, &metric).unwrap(), nearest_index(&h, &q, &scaled).unwrap());
    Ok(())
}

pub type SeedInput = (u64, u64, usize, f64, bool);

pub fn seed_input() -> impl Strategy<Value = SeedInput> {
    (0..10_000u64, 0..50u64, 1..4usize, 0.05..1.0f64, any::<bool>())
}

pub fn seeded_runs_repeat((seed, stream, dim, tau, mc): SeedInput) -> Result<(), TestCaseError> {
    let problem = quadratic_problem(dim).unwrap();
    let config = CsgConfig {
        tau,
        iterations: 60,
        scheme: if mc { WeightScheme::Mc { samples: 50 } } else { WeightScheme::Empirical },
        seed,
        stream,
        log: LogSchedule::Every { stride: 1 },
        ..CsgConfig::default()
    };
    let a = run_csg(&problem, &config).unwrap();
    let b = run_csg(&problem, &config).unwrap();
    prop_assert_eq!(&a, &b);
    let other = run_csg(&problem, &CsgConfig { stream: stream + 1, ..config }).unwrap();
    prop_assert_ne!(a.final_design, other.final_design);
    Ok(())
}

/// Repeats a rate experiment and checks that run `k` does not depend on the
/// number of runs.
pub fn rate_runs_repeat() -> Result<(), String> {
    let config = ExperimentConfig { problem: ProblemKind::Quad, dim: 2, runs: 4, iterations: 80, seed: 11, ..ExperimentConfig::default() };
    // records hold NaN where a quantity is undefined, so compare their text
    let show = |runs: &[Vec<RunRecord>]| format!("{runs:?}");
    let a = run_rate_runs(&config).map_err(|e| e.to_string())?;
    if show(&a) != show(&run_rate_runs(&config).map_err(|e| e.to_string())?) {
        return Err("repeated experiment differs".into());
    }
    let fewer = run_rate_runs(&ExperimentConfig { runs: 2, ..config }).map_err(|e| e.to_string())?;
    if show(&a[..2]) != show(&fewer) {
        return Err("run records depend on the number of runs".into());
    }
    Ok(())
}

/// Runs a property with a fixed generator seed outside the test macro.
pub fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng).run(&strategy, test).map_err(|e| e.to_string())
}

/// Every invariant with its case count; `(name, outcome)` per property.
pub fn all_invariants(scale: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("tree_matches_linear_scan", check(256 * scale, tree_input(), tree_matches_linear_scan)),
        ("empirical_weights_match_brute_force", check(256 * scale, record_sets(), empirical_weights_match_brute_force)),
        ("grid_weights_match_brute_force", check(256 * scale, grid_input(), grid_weights_match_brute_force)),
        ("sweep_matches_brute_force", check(256 * scale, sweep_input(), sweep_matches_brute_force)),
        ("mc_weights_are_a_distribution", check(256 * scale, mc_input(), mc_weights_are_a_distribution)),
        ("metric_scaling_keeps_the_argmin", check(256 * scale, scaling_input(), metric_scaling_keeps_the_argmin)),
        ("power_of_two_scaling_keeps_ties", check(256 * scale, tie_input(), power_of_two_scaling_keeps_ties)),
        ("seeded_runs_repeat", check(24 * scale, seed_input(), seeded_runs_repeat)),
        ("rate_runs_repeat", rate_runs_repeat()),
    ]
}
