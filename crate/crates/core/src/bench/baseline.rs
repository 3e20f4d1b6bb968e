//! Prediscretized full-gradient baseline for the paint problem, and the
//! CSG configuration it is compared against.

use serde::Serialize;

use crate::color::PaintObjective;
use crate::composite::{run_nested, NestedConfig, NestedMetric, NestedObjective};
use crate::csg::{csg_step, projected_gradient_norm, LogSchedule};
use crate::error::{domain, Result};
use crate::measures::rng_stream;
use crate::weights::WeightScheme;

/// Threshold on the reference projected gradient norm separating stationary
/// from wrong designs.
pub const STATIONARITY_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineConfig {
    /// Nodes on wavelength, radius perturbation and thickness perturbation.
    pub grid: (usize, usize, usize),
    pub step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { grid: (2, 2, 2), step: 0.5, tolerance: 1e-6, max_iterations: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineRun {
    pub start: Vec<f64>,
    /// Every iterate, starting with `start`.
    pub path: Vec<Vec<f64>>,
    pub objective: f64,
    /// Projected gradient norm of the discretized objective at the last iterate.
    pub stationarity: f64,
    pub converged: bool,
}

impl BaselineRun {
    pub fn terminal(&self) -> &[f64] {
        self.path.last().expect("path holds the start")
    }

    pub fn iterations(&self) -> usize {
        self.path.len() - 1
    }
}

/// Projected gradient descent with a fixed step on the objective discretized
/// by `grid`. The perturbation nodes are relative, so they follow the design.
pub fn full_grid_baseline(paint: &PaintObjective, config: &BaselineConfig, start: &[f64]) -> Result<BaselineRun> {
    let (nl, nr, nd) = config.grid;
    if nl == 0 || nr == 0 || nd == 0 {
        return domain("grid counts must be at least one");
    }
    if !(config.step > 0.0) {
        return domain("baseline step must be positive");
    }
    let bx = paint.design_box();
    let mut u = start.to_vec();
    bx.clamp_in_place(&mut u);
    let mut path = vec![u.clone()];
    loop {
        let (objective, g) = paint.discretized_grid(&u, nl, nr, nd)?;
        let stationarity = projected_gradient_norm(&u, &g, bx);
        let converged = stationarity < config.tolerance;
        if converged || path.len() > config.max_iterations {
            return Ok(BaselineRun { start: start.to_vec(), path, objective, stationarity, converged });
        }
        u = csg_step(&u, &g, config.step, bx);
        path.push(u.clone());
    }
}

/// Projected gradient norm of the reference-quadrature objective.
pub fn reference_stationarity(paint: &PaintObjective, u: &[f64]) -> f64 {
    let (_, g) = paint.reference(u);
    projected_gradient_norm(u, &g, paint.design_box())
}

/// Uniform starts in the design box, start `i` from stream `i`.
pub fn paint_starts(paint: &PaintObjective, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count).map(|i| paint.design_box().sample(&mut rng_stream(seed, i as u64))).collect()
}

/// CSG settings for the paint problem: empirical weights on both levels.
/// Radius and thickness are in nanometres while the perturbation is
/// relative, hence the large inner coefficient.
pub fn paint_csg_config(start: Vec<f64>, iterations: usize, seed: u64, stream: u64) -> NestedConfig {
    NestedConfig {
        tau: 10.0,
        iterations,
        inner_scheme: WeightScheme::Empirical,
        outer_scheme: WeightScheme::Empirical,
        metric: NestedMetric { design: 1.0, outer: 1.0, inner: 50.0 },
        seed,
        stream,
        start: Some(start),
        log: LogSchedule::LogSpaced { per_decade: 20 },
    }
}

/// Equal-mass wavelength cells used by [`paint_estimate_config`].
pub const ESTIMATE_OUTER_CELLS: usize = 10_000;

/// CSG settings for estimating the objective at a fixed design. With
/// `tau = 0` every wavelength sample coincides in the metric, so empirical
/// weights would reduce the outer level to a plain sample mean; the outer
/// level uses exact cell masses instead.
pub fn paint_estimate_config(design: Vec<f64>, iterations: usize, seed: u64, stream: u64) -> NestedConfig {
    NestedConfig {
        tau: 0.0,
        outer_scheme: WeightScheme::ExactGrid { resolution: ESTIMATE_OUTER_CELLS },
        ..paint_csg_config(design, iterations, seed, stream)
    }
}

/// A baseline run together with the reference stationarity of its terminal point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineOutcome {
    pub run: BaselineRun,
    pub reference_stationarity: f64,
}

impl BaselineOutcome {
    /// Converged on the discretized objective, yet not stationary for the
    /// reference one.
    pub fn is_wrong(&self) -> bool {
        self.run.converged && self.reference_stationarity > STATIONARITY_THRESHOLD
    }
}

pub fn baseline_study(paint: &PaintObjective, config: &BaselineConfig, starts: &[Vec<f64>]) -> Result<Vec<BaselineOutcome>> {
    super::parallel_map(starts.len(), |i| {
        let run = full_grid_baseline(paint, config, &starts[i])?;
        let reference_stationarity = reference_stationarity(paint, run.terminal());
        Ok(BaselineOutcome { run, reference_stationarity })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsgOutcome {
    pub start: Vec<f64>,
    pub terminal: Vec<f64>,
    pub reference_stationarity: f64,
}

impl CsgOutcome {
    pub fn is_stationary(&self) -> bool {
        self.reference_stationarity < STATIONARITY_THRESHOLD
    }
}

/// CSG from every start, run `i` on stream `i` of `seed`.
pub fn csg_study(paint: &PaintObjective, starts: &[Vec<f64>], iterations: usize, seed: u64) -> Result<Vec<CsgOutcome>> {
    super::parallel_map(starts.len(), |i| {
        let config = paint_csg_config(starts[i].clone(), iterations, seed, i as u64);
        let terminal = run_nested(paint, &config)?.final_design;
        let reference_stationarity = reference_stationarity(paint, &terminal);
        Ok(CsgOutcome { start: starts[i].clone(), terminal, reference_stationarity })
    })
    .into_iter()
    .collect()
}
