//! Pass/fail checks shared by the command line summaries and the acceptance suite.

use serde::Serialize;

use super::rates::{RateReport, RunRecord};

/// Slope window for a largest integration dimension of one or two (rate -1/2).
pub const HALF_RATE_WINDOW: (f64, f64) = (-0.65, -0.40);
/// Slope window of the leave-one-out Z estimate for dimension five (rate -1/5).
pub const FIFTH_RATE_WINDOW: (f64, f64) = (-0.28, -0.14);
/// Distance slope bound for dimension five.
pub const FIFTH_RATE_DISTANCE: f64 = -0.14;
/// Largest pairwise slope difference across outer dimensions.
pub const DIMENSION_SPREAD: f64 = 0.05;
/// Required slope gain of the split problem over the unsplit one.
pub const SPLIT_GAIN: f64 = 0.15;
/// Share of CSG runs that must end stationary.
pub const STATIONARY_SHARE: f64 = 0.9;
/// Relative error the objective estimates must reach and keep.
pub const ESTIMATE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

pub fn slope_within(name: &str, slope: f64, (lo, hi): (f64, f64)) -> Check {
    Check::new(name, slope >= lo && slope <= hi, format!("slope {slope:.4} in [{lo}, {hi}]"))
}

pub fn slope_at_most(name: &str, slope: f64, bound: f64) -> Check {
    Check::new(name, slope <= bound, format!("slope {slope:.4} <= {bound}"))
}

/// Checks that apply to a rate report, chosen by its predicted rate.
pub fn rate_checks(report: &RateReport) -> Vec<Check> {
    let mut checks = Vec::new();
    let distance = report.fit_of("distance").map(|f| f.slope);
    let z_loo = report.fit_of("z_loo").map(|f| f.slope);
    if report.predicted_slope == -0.5 {
        if let Some(s) = distance {
            checks.push(slope_within("distance_rate", s, HALF_RATE_WINDOW));
        }
    } else if report.predicted_slope == -0.2 {
        if let Some(s) = z_loo {
            checks.push(slope_within("z_loo_rate", s, FIFTH_RATE_WINDOW));
        }
        if let Some(s) = distance {
            checks.push(slope_at_most("distance_rate", s, FIFTH_RATE_DISTANCE));
        }
    }
    checks
}

/// `|G_n - grad J(u_n)| <= sup Z_n` at every logged iteration of every run.
pub fn error_bound_validity(runs: &[Vec<RunRecord>]) -> Check {
    let rows: Vec<&RunRecord> = runs.iter().flatten().collect();
    let violations = rows.iter().filter(|r| !(r.gradient_error <= r.z_grid)).count();
    let worst = rows.iter().map(|r| r.gradient_error / r.z_grid).fold(0.0, f64::max);
    Check::new(
        "error_bound_validity",
        violations == 0 && !rows.is_empty(),
        format!("{violations} violations in {} logged rows, largest ratio {worst:.4}", rows.len()),
    )
}

pub fn dimension_independence(slopes: &[f64]) -> Check {
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Check::new(
        "dimension_independence",
        hi - lo < DIMENSION_SPREAD,
        format!("slopes {slopes:.4?}, spread {:.4} < {DIMENSION_SPREAD}", hi - lo),
    )
}

pub fn decomposition(unsplit: f64, split: f64) -> Vec<Check> {
    vec![
        Check::new(
            "split_gain",
            split <= unsplit - SPLIT_GAIN,
            format!("split {split:.4} <= unsplit {unsplit:.4} - {SPLIT_GAIN}"),
        ),
        slope_within("split_rate", split, HALF_RATE_WINDOW),
    ]
}

pub fn artifact_present(wrong: usize, starts: usize) -> Check {
    Check::new("baseline_artifact", wrong >= 1, format!("{wrong} of {starts} baseline terminal points are not stationary"))
}

pub fn csg_stationary(stationary: usize, runs: usize) -> Check {
    Check::new(
        "csg_stationary",
        stationary as f64 >= STATIONARY_SHARE * runs as f64,
        format!("{stationary} of {runs} runs stationary, need {:.0}%", 100.0 * STATIONARY_SHARE),
    )
}

/// Median of evaluation counts where `None` (never reached) sorts last.
pub fn median_count(counts: &[Option<usize>]) -> Option<usize> {
    let mut v = counts.to_vec();
    v.sort_by_key(|c| c.unwrap_or(usize::MAX));
    v.get(v.len() / 2).copied().flatten()
}

/// CSG needs no more evaluations than Monte Carlo, comparing medians;
/// a series that never reaches the tolerance counts as infinitely expensive.
pub fn estimator_comparison(csg: &[Option<usize>], mc: &[Option<usize>], mc_budget: usize) -> Check {
    let (c, m) = (median_count(csg), median_count(mc));
    let passed = match (c, m) {
        (Some(c), Some(m)) => c <= m,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let show = |x: Option<usize>, cap: &str| x.map_or(format!("not within {cap}"), |v| v.to_string());
    Check::new(
        "estimator_comparison",
        passed,
        format!("median evaluations to {:.0}%: csg {}, mc {}", 100.0 * ESTIMATE_TOLERANCE, show(c, "run"), show(m, &mc_budget.to_string())),
    )
}
