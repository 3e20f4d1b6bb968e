//! Convergence-rate experiments: many seeded runs, per-iteration medians and
//! log-log slope fits.

use serde::{Deserialize, Serialize};

use crate::csg::{CsgConfig, CsgSolver, LogSchedule, MonitorConfig, Problem, Step};
use crate::error::{domain, Result};
use crate::weights::WeightScheme;

use super::problems::{anisotropic_problem, parse_groups, quadratic_problem};

/// Least-squares fit of `ln value = intercept + slope ln n` over a window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Inclusive iteration range `[n_lo, n_hi]`.
    pub window: (usize, usize),
    /// Root mean square of the log residuals.
    pub residual: f64,
}

/// Smallest number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// Share of the logged points, counted from the start, left out of the
/// default window.
pub const FIT_SKIP_FRACTION: f64 = 0.2;

/// Default window: the last 80% of the (log-spaced) logged iterations.
pub fn default_window(iterations: &[usize]) -> Option<(usize, usize)> {
    let last = *iterations.last()?;
    let skip = (FIT_SKIP_FRACTION * iterations.len() as f64).floor() as usize;
    Some((iterations[skip.min(iterations.len() - 1)], last))
}

/// Fits the points of `(n, value)` with `n` inside `window`.
pub fn fit_rate(series: &[(usize, f64)], window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo >= hi {
        return domain(format!("empty fit window [{lo}, {hi}]"));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, _)| (lo..=hi).contains(n))
        .map(|&(n, v)| {
            if v > 0.0 && v.is_finite() && n > 0 {
                Ok(((n as f64).ln(), v.ln()))
            } else {
                domain(format!("value {v} at iteration {n} cannot be fitted on a log scale"))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < MIN_FIT_POINTS {
        return domain(format!("{} points in the fit window, at least {MIN_FIT_POINTS} needed", pts.len()));
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / m, b + p.1 / m));
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
    Ok(RateFit { slope, intercept, window, residual })
}

/// Predicted slope `-1 / max(2, d)` of the design error.
pub fn predicted_slope(dim: usize) -> f64 {
    -1.0 / (dim.max(2) as f64)
}

/// Median of the finite entries; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Quadratic with matching design and integration dimension.
    Quad,
    /// Quadratic with a scalar random variable and `dim` design coordinates.
    Aniso,
}

impl std::str::FromStr for ProblemKind {
    type Err = crate::CsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quad" => Ok(ProblemKind::Quad),
            "aniso" => Ok(ProblemKind::Aniso),
            other => domain(format!("unknown problem '{other}' (expected quad or aniso)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub dim: usize,
    pub runs: usize,
    pub iterations: usize,
    pub tau: f64,
    pub weights: WeightScheme,
    pub design_coefficient: f64,
    pub point_coefficient: f64,
    /// Group specification, see [`parse_groups`]; quadratic problem only.
    pub groups: Option<String>,
    pub seed: u64,
    /// Logged iterations per decade.
    pub per_decade: usize,
    /// Track the sample-based `Z` estimates and the error bound.
    pub monitor: bool,
    /// Points per axis of the grid on which the sup of `Z_n` is taken.
    pub grid_sup: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Quad,
            dim: 1,
            runs: 50,
            iterations: 5000,
            tau: 0.5,
            weights: WeightScheme::Empirical,
            design_coefficient: 1.0,
            point_coefficient: 1.0,
            groups: None,
            seed: 0,
            per_decade: 20,
            monitor: true,
            grid_sup: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return domain("dimension must be at least one");
        }
        if self.runs == 0 {
            return domain("at least one run is required");
        }
        if self.groups.is_some() && self.problem != ProblemKind::Quad {
            return domain("groups apply to the quadratic problem only");
        }
        self.csg(0).validate()
    }

    fn csg(&self, run: usize) -> CsgConfig {
        CsgConfig {
            tau: self.tau,
            iterations: self.iterations,
            scheme: self.weights,
            design_coefficient: self.design_coefficient,
            point_coefficient: self.point_coefficient,
            seed: self.seed,
            stream: run as u64,
            start: None,
            log: LogSchedule::LogSpaced { per_decade: self.per_decade },
            monitor: MonitorConfig { z: self.monitor, lipschitz: self.monitor, grid_sup: self.grid_sup },
        }
    }

    fn problem(&self) -> Result<Box<dyn Problem + Send + Sync>> {
        Ok(match (self.problem, &self.groups) {
            (ProblemKind::Quad, None) => Box::new(quadratic_problem(self.dim)?),
            (ProblemKind::Quad, Some(spec)) => {
                Box::new(quadratic_problem(self.dim)?.split(parse_groups(spec, self.dim)?)?)
            }
            (ProblemKind::Aniso, _) => Box::new(anisotropic_problem(self.dim)?),
        })
    }
}

/// Quantities recorded at each logged iteration of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub design: Vec<f64>,
    pub gradient_norm: f64,
    pub objective: f64,
    pub distance: f64,
    pub z_paper: f64,
    pub z_loo: f64,
    pub z_grid: f64,
    pub error_bound: f64,
    pub gradient_error: f64,
}

impl RunRecord {
    fn from_step(step: &Step) -> Self {
        let d = step.diagnostics.clone().unwrap_or_default();
        let nan = f64::NAN;
        Self {
            iteration: step.iteration,
            design: step.design.clone(),
            gradient_norm: step.gradient_norm(),
            objective: step.objective,
            distance: d.distance_to_optimum.unwrap_or(nan),
            z_paper: d.z_paper.unwrap_or(nan),
            z_loo: d.z_loo.unwrap_or(nan),
            z_grid: d.z_grid.unwrap_or(nan),
            error_bound: d.error_bound.unwrap_or(nan),
            gradient_error: d.gradient_error.unwrap_or(nan),
        }
    }
}

/// Names of the scalar quantities of a [`RunRecord`], in CSV order.
pub const QUANTITIES: [&str; 8] =
    ["gradient_norm", "objective", "z_loo", "error_bound", "distance", "z_paper", "z_grid", "gradient_error"];

fn quantity(r: &RunRecord, name: &str) -> f64 {
    match name {
        "gradient_norm" => r.gradient_norm,
        "objective" => r.objective,
        "z_loo" => r.z_loo,
        "error_bound" => r.error_bound,
        "distance" => r.distance,
        "z_paper" => r.z_paper,
        "z_grid" => r.z_grid,
        "gradient_error" => r.gradient_error,
        _ => unreachable!("unknown quantity {name}"),
    }
}

/// Logged records of one seeded run.
pub fn run_single(config: &ExperimentConfig, run: usize) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let problem = config.problem()?;
    run_problem(problem.as_ref(), config, run)
}

fn run_problem(problem: &(dyn Problem + Send + Sync), config: &ExperimentConfig, run: usize) -> Result<Vec<RunRecord>> {
    let mut solver = CsgSolver::new(problem, config.csg(run))?;
    let mut out = Vec::new();
    while !solver.is_done() {
        let step = solver.step()?;
        if step.logged {
            out.push(RunRecord::from_step(&step));
        }
    }
    Ok(out)
}

/// Per-iteration medians over runs, with a fit per quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    pub iterations: Vec<usize>,
    /// Coordinate-wise median designs.
    pub design: Vec<Vec<f64>>,
    /// `medians[q][i]`: median of quantity `QUANTITIES[q]` at `iterations[i]`.
    pub medians: Vec<Vec<f64>>,
    /// Fits over the default window; `None` where a quantity is not tracked.
    pub fits: Vec<Option<RateFit>>,
    pub predicted_slope: f64,
}

impl RateReport {
    pub fn median_of(&self, name: &str) -> Option<&[f64]> {
        QUANTITIES.iter().position(|q| *q == name).map(|i| &self.medians[i][..])
    }

    pub fn fit_of(&self, name: &str) -> Option<RateFit> {
        QUANTITIES.iter().position(|q| *q == name).and_then(|i| self.fits[i])
    }
}

/// Logged records of `config.runs` independent runs. Runs are spread over
/// the available threads; each owns its random stream, so the records do not
/// depend on the scheduling.
pub fn run_rate_runs(config: &ExperimentConfig) -> Result<Vec<Vec<RunRecord>>> {
    config.validate()?;
    let problem = config.problem()?;
    let problem = problem.as_ref();
    super::parallel_map(config.runs, |run| run_problem(problem, config, run)).into_iter().collect()
}

pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    Ok(aggregate(config.clone(), &run_rate_runs(config)?))
}

/// Medians and fits of already computed runs. All runs share the logging
/// schedule, so their records line up by position.
pub fn aggregate(config: ExperimentConfig, runs: &[Vec<RunRecord>]) -> RateReport {
    let iterations: Vec<usize> = runs.first().map(|r| r.iter().map(|s| s.iteration).collect()).unwrap_or_default();
    let dd = runs.first().and_then(|r| r.first()).map_or(0, |s| s.design.len());
    let design = (0..iterations.len())
        .map(|i| {
            (0..dd)
                .map(|c| median(&runs.iter().map(|r| r[i].design[c]).collect::<Vec<_>>()).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let medians: Vec<Vec<f64>> = QUANTITIES
        .iter()
        .map(|q| {
            (0..iterations.len())
                .map(|i| median(&runs.iter().map(|r| quantity(&r[i], q)).collect::<Vec<_>>()).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let window = default_window(&iterations);
    let fits = medians
        .iter()
        .map(|m| {
            let series: Vec<(usize, f64)> = iterations.iter().copied().zip(m.iter().copied()).collect();
            window.and_then(|w| fit_rate(&series, w).ok())
        })
        .collect();
    let predicted = match config.problem {
        ProblemKind::Quad => {
            let largest = config
                .groups
                .as_deref()
                .and_then(|g| parse_groups(g, config.dim).ok())
                .map_or(config.dim, |g| g.iter().map(Vec::len).max().unwrap_or(config.dim));
            predicted_slope(largest)
        }
        ProblemKind::Aniso => predicted_slope(1),
    };
    RateReport { config, iterations, design, medians, fits, predicted_slope: predicted }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law(c: f64, p: f64) -> Vec<(usize, f64)> {
        LogSchedule::default().iterations(5000).into_iter().map(|n| (n, c * (n as f64).powf(p))).collect()
    }

    #[test]
    fn fits_exact_power_laws() {
        let f = fit_rate(&power_law(1.0, -0.5), (1, 5000)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-10);
        assert!(f.residual < 1e-10);
        let f = fit_rate(&power_law(3.0, -0.25), (10, 5000)).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        let f = fit_rate(&power_law(2.0, 0.0), (1, 5000)).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let mut s = power_law(1.0, -0.5);
        assert!(fit_rate(&s, (100, 100)).is_err());
        assert!(fit_rate(&s, (4000, 5000)).is_err());
        s[30].1 = 0.0;
        assert!(fit_rate(&s, (1, 5000)).is_err());
    }

    #[test]
    fn windows_and_medians() {
        let its = LogSchedule::default().iterations(5000);
        let (lo, hi) = default_window(&its).unwrap();
        assert_eq!(hi, 5000);
        assert_eq!(lo, its[(its.len() as f64 * 0.2) as usize]);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
        assert_eq!(predicted_slope(1), -0.5);
        assert_eq!(predicted_slope(5), -0.2);
    }

    #[test]
    fn single_run_report_is_that_run() {
        let cfg = ExperimentConfig { runs: 1, iterations: 200, dim: 2, ..Default::default() };
        let report = run_rate_experiment(&cfg).unwrap();
        let run = run_single(&cfg, 0).unwrap();
        assert_eq!(report.iterations, run.iter().map(|r| r.iteration).collect::<Vec<_>>());
        assert_eq!(report.median_of("distance").unwrap(), run.iter().map(|r| r.distance).collect::<Vec<_>>());
        assert_eq!(report.design.last().unwrap(), &run.last().unwrap().design);
    }

    #[test]
    fn config_checks() {
        assert!(ExperimentConfig { runs: 0, ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { tau: -1.0, ..Default::default() }.validate().is_err());
        let cfg = ExperimentConfig { problem: ProblemKind::Aniso, groups: Some("1x1".into()), ..Default::default() };
        assert!(cfg.validate().is_err());
        let json = r#"{"problem": "aniso", "dim": 10, "weights": {"scheme": "empirical"}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!((cfg.problem, cfg.dim, cfg.runs), (ProblemKind::Aniso, 10, 50));
    }
}
