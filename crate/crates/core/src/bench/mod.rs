//! Benchmark problems, baselines and rate experiments.

pub mod baseline;
pub mod checks;
pub mod estimator;
pub mod problems;
pub mod rates;

pub use baseline::{
    baseline_study, csg_study, full_grid_baseline, paint_csg_config, paint_estimate_config, ESTIMATE_OUTER_CELLS, paint_starts, reference_stationarity, BaselineConfig,
    BaselineOutcome, BaselineRun, CsgOutcome, STATIONARITY_THRESHOLD,
};
pub use estimator::{csg_objective_series, evaluations_to_tolerance, mc_objective_estimator, EstimatePoint};
pub use problems::{anisotropic_problem, parse_groups, quadratic_problem, Anisotropic, Quadratic};
pub use rates::{fit_rate, median, run_rate_experiment, run_rate_runs, RunRecord, ExperimentConfig, ProblemKind, RateFit, RateReport};

/// `f(0), ..., f(count - 1)` spread over the available threads in contiguous
/// chunks. Results are in index order whatever the scheduling.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, f: F) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).clamp(1, count.max(1));
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let mut results: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let per = count.div_ceil(threads).max(1);
    let f = &f;
    std::thread::scope(|scope| {
        for (c, chunk) in results.chunks_mut(per).enumerate() {
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(c * per + i));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every index evaluated")).collect()
}
