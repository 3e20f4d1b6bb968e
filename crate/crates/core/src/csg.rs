//! The CSG iteration: sample, store, reweight, step.

use serde::{Deserialize, Serialize};

use crate::error::{domain, state, Result};
use crate::history::History;
use crate::measures::{rng_stream, BoxDomain, MeasureSpec, RngStream};
use crate::metric::ProductMetric;
use crate::monitor::{error_bound, z_grid_sup, z_sup_cells, LipschitzTracker, SupVariant};
use crate::weights::{Cells, WeightEngine, WeightScheme, WeightVector};

/// An objective `J(u) = sum_p integral j_p(u, x) mu_p(dx)` over a box of designs.
///
/// Most problems have a single part. Separable integrals split into several
/// parts whose random variables are sampled and weighted independently.
pub trait Problem {
    fn design_box(&self) -> &BoxDomain;

    fn design_dim(&self) -> usize {
        self.design_box().dim()
    }

    fn parts(&self) -> usize {
        1
    }

    fn measure(&self, part: usize) -> &MeasureSpec;

    /// Returns `j_p(u, x)` and writes its design gradient into `grad`.
    fn integrand(&self, part: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64;

    fn exact_gradient(&self, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn exact_objective(&self, _u: &[f64]) -> Option<f64> {
        None
    }

    fn optimum(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Turns a maximization problem into a minimization problem.
pub struct Negated<P>(pub P);

impl<P: Problem> Problem for Negated<P> {
    fn design_box(&self) -> &BoxDomain {
        self.0.design_box()
    }

    fn parts(&self) -> usize {
        self.0.parts()
    }

    fn measure(&self, part: usize) -> &MeasureSpec {
        self.0.measure(part)
    }

    fn integrand(&self, part: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.0.integrand(part, u, x, grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        -v
    }

    fn exact_gradient(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.0.exact_gradient(u).map(|g| g.into_iter().map(|v| -v).collect())
    }

    fn exact_objective(&self, u: &[f64]) -> Option<f64> {
        self.0.exact_objective(u).map(|v| -v)
    }
}

/// `sum_k alpha_k * jacobian_k`, row-major `outputs x design_dim`.
pub fn estimate_gradient(history: &History, weights: &WeightVector) -> Result<Vec<f64>> {
    if weights.len() != history.len() {
        return domain(format!("{} weights for {} records", weights.len(), history.len()));
    }
    let w = history.outputs() * history.grad_dim();
    let mut out = vec![0.0; w];
    for (jac, &a) in history.jacobians().chunks_exact(w.max(1)).zip(weights.as_slice()) {
        if a != 0.0 {
            for (o, j) in out.iter_mut().zip(jac) {
                *o += a * j;
            }
        }
    }
    Ok(out)
}

/// `sum_k alpha_k * j(u_k, x_k)` for every integrand output.
pub fn estimate_values(history: &History, weights: &WeightVector) -> Result<Vec<f64>> {
    if weights.len() != history.len() {
        return domain(format!("{} weights for {} records", weights.len(), history.len()));
    }
    let Some(values) = history.values() else {
        return state("history does not store integrand values");
    };
    let m = history.outputs();
    let mut out = vec![0.0; m];
    for (v, &a) in values.chunks_exact(m.max(1)).zip(weights.as_slice()) {
        if a != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += a * x;
            }
        }
    }
    Ok(out)
}

/// Scalar objective estimate; uses the first output of vector integrands.
pub fn estimate_objective(history: &History, weights: &WeightVector) -> Result<f64> {
    Ok(estimate_values(history, weights)?[0])
}

/// `clamp(u - tau * g)` onto the box.
pub fn csg_step(u: &[f64], g: &[f64], tau: f64, design_box: &BoxDomain) -> Vec<f64> {
    debug_assert!(tau >= 0.0);
    let mut next: Vec<f64> = u.iter().zip(g).map(|(a, b)| a - tau * b).collect();
    design_box.clamp_in_place(&mut next);
    next
}

/// Norm of `u - clamp(u - g)`: zero exactly at box-constrained stationary points.
pub fn projected_gradient_norm(u: &[f64], g: &[f64], design_box: &BoxDomain) -> f64 {
    let p = csg_step(u, g, 1.0, design_box);
    u.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Iterations at which diagnostics are computed and rows are exported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LogSchedule {
    Every { stride: usize },
    /// Roughly `per_decade` log-spaced iterations per power of ten, plus the last.
    LogSpaced { per_decade: usize },
}

impl Default for LogSchedule {
    fn default() -> Self {
        LogSchedule::LogSpaced { per_decade: 20 }
    }
}

impl LogSchedule {
    /// Flags for iterations `0..=iterations` (index 0 unused).
    pub fn mask(&self, iterations: usize) -> Vec<bool> {
        let mut mask = vec![false; iterations + 1];
        match *self {
            LogSchedule::Every { stride } => {
                let stride = stride.max(1);
                for n in (stride..=iterations).step_by(stride) {
                    mask[n] = true;
                }
                if iterations >= 1 {
                    mask[1] = true;
                }
            }
            LogSchedule::LogSpaced { per_decade } => {
                let per_decade = per_decade.max(1) as f64;
                let mut i = 0.0;
                loop {
                    let n = 10f64.powf(i / per_decade).round() as usize;
                    if n > iterations {
                        break;
                    }
                    mask[n] = true;
                    i += 1.0;
                }
            }
        }
        if iterations >= 1 {
            mask[iterations] = true;
        }
        mask
    }

    pub fn iterations(&self, iterations: usize) -> Vec<usize> {
        self.mask(iterations).iter().enumerate().filter(|(_, &m)| m).map(|(n, _)| n).collect()
    }
}

/// Which diagnostics to compute at logged iterations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// Both sample-based sup estimates of `Z_n`.
    pub z: bool,
    /// Running Lipschitz estimate and the resulting error bound.
    pub lipschitz: bool,
    /// Sup of `Z_n` over an inclusive grid with this many points per axis.
    pub grid_sup: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsgConfig {
    pub tau: f64,
    pub iterations: usize,
    pub scheme: WeightScheme,
    /// Coefficient of the design block in the nearest-neighbor metric.
    pub design_coefficient: f64,
    /// Coefficient of the integration-variable block.
    pub point_coefficient: f64,
    pub seed: u64,
    /// Run index; selects an independent random stream under `seed`.
    pub stream: u64,
    /// Initial design; drawn uniformly from the box when absent.
    pub start: Option<Vec<f64>>,
    pub log: LogSchedule,
    pub monitor: MonitorConfig,
}

impl Default for CsgConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            iterations: 1000,
            scheme: WeightScheme::Empirical,
            design_coefficient: 1.0,
            point_coefficient: 1.0,
            seed: 0,
            stream: 0,
            start: None,
            log: LogSchedule::default(),
            monitor: MonitorConfig::default(),
        }
    }
}

impl CsgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return domain("step size must be finite and nonnegative");
        }
        if self.iterations == 0 {
            return domain("at least one iteration is required");
        }
        if !(self.design_coefficient > 0.0) || !(self.point_coefficient > 0.0) {
            return domain("metric coefficients must be positive");
        }
        Ok(())
    }
}

/// Quantities computed at logged iterations. Sums over parts where several
/// histories are involved; `Z` estimates are the largest over parts.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub z_paper: Option<f64>,
    pub z_loo: Option<f64>,
    pub z_grid: Option<f64>,
    pub lipschitz: Option<f64>,
    pub error_bound: Option<f64>,
    pub distance_to_optimum: Option<f64>,
    pub gradient_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub iteration: usize,
    /// `u_n`, the design the estimates refer to.
    pub design: Vec<f64>,
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub logged: bool,
    pub diagnostics: Option<Diagnostics>,
}

impl Step {
    pub fn gradient_norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// `u_{N+1}`, the design after the last step.
    pub final_design: Vec<f64>,
}

impl Trajectory {
    pub fn logged(&self) -> impl Iterator<Item = &Step> + '_ {
        self.steps.iter().filter(|s| s.logged)
    }
}

struct Part {
    history: History,
    engine: WeightEngine,
    metric: ProductMetric,
    lipschitz: LipschitzTracker,
}

/// A CSG run in progress. [`run_csg`] drives it to completion; stepping by
/// hand avoids keeping the whole trajectory.
pub struct CsgSolver<'p, P: Problem + ?Sized> {
    problem: &'p P,
    config: CsgConfig,
    rng: RngStream,
    u: Vec<f64>,
    n: usize,
    parts: Vec<Part>,
    mask: Vec<bool>,
    grad: Vec<f64>,
    x: Vec<f64>,
}

impl<'p, P: Problem + ?Sized> CsgSolver<'p, P> {
    pub fn new(problem: &'p P, config: CsgConfig) -> Result<Self> {
        config.validate()?;
        let dd = problem.design_dim();
        let mut rng = rng_stream(config.seed, config.stream);
        let u = match &config.start {
            Some(s) if s.len() != dd => return domain(format!("start has {} entries, designs have {dd}", s.len())),
            Some(s) => {
                let mut s = s.clone();
                problem.design_box().clamp_in_place(&mut s);
                s
            }
            None => problem.design_box().sample(&mut rng),
        };
        let mut parts = Vec::with_capacity(problem.parts());
        for p in 0..problem.parts() {
            let measure = problem.measure(p).clone();
            let pd = measure.dim();
            let metric = ProductMetric::design_point(dd, pd, config.design_coefficient, config.point_coefficient)?;
            parts.push(Part {
                history: History::new(dd, pd, 1),
                engine: WeightEngine::new(config.scheme, measure)?,
                metric,
                lipschitz: LipschitzTracker::new(),
            });
        }
        let mask = config.log.mask(config.iterations);
        let x = Vec::new();
        Ok(Self { problem, config, rng, u, n: 0, parts, mask, grad: vec![0.0; dd], x })
    }

    pub fn design(&self) -> &[f64] {
        &self.u
    }

    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn is_done(&self) -> bool {
        self.n >= self.config.iterations
    }

    pub fn history(&self, part: usize) -> &History {
        &self.parts[part].history
    }

    /// Performs iteration `n + 1` and returns its estimates.
    pub fn step(&mut self) -> Result<Step> {
        let n = self.n + 1;
        let logged = self.mask.get(n).copied().unwrap_or(false);
        let dd = self.u.len();

        for (p, part) in self.parts.iter_mut().enumerate() {
            self.x.resize(part.history.point_dim(), 0.0);
            part.engine.measure().sample_into(&mut self.rng, &mut self.x);
            let value = self.problem.integrand(p, &self.u, &self.x, &mut self.grad);
            part.history.push(&self.u, &self.x, Some(&[value]), &self.grad)?;
        }

        let mut gradient = vec![0.0; dd];
        let mut objective = 0.0;
        let mut diag = Diagnostics::default();
        let monitor = &self.config.monitor;
        let mut bound = 0.0;
        for part in self.parts.iter_mut() {
            let cells = Cells::for_history(&part.history, &self.u, &part.metric)?;
            let weights = part.engine.weights(&cells, &mut self.rng);
            for (g, e) in gradient.iter_mut().zip(estimate_gradient(&part.history, &weights)?) {
                *g += e;
            }
            objective += estimate_objective(&part.history, &weights)?;
            if !logged {
                continue;
            }
            if monitor.z {
                let zp = z_sup_cells(&cells, SupVariant::Paper)?;
                diag.z_paper = Some(diag.z_paper.map_or(zp, |z: f64| z.max(zp)));
                if cells.len() >= 2 {
                    let zl = z_sup_cells(&cells, SupVariant::LeaveOneOut)?;
                    diag.z_loo = Some(diag.z_loo.map_or(zl, |z: f64| z.max(zl)));
                }
            }
            if let Some(per_axis) = monitor.grid_sup {
                let zg = z_grid_sup(&cells, part.engine.measure(), per_axis);
                diag.z_grid = Some(diag.z_grid.map_or(zg, |z: f64| z.max(zg)));
            }
            if monitor.lipschitz {
                part.lipschitz.update(&part.history, &part.metric)?;
                let l = part.lipschitz.estimate().unwrap_or(0.0);
                diag.lipschitz = Some(diag.lipschitz.map_or(l, |m: f64| m.max(l)));
                let z = z_sup_cells(&cells, if cells.len() >= 2 { SupVariant::LeaveOneOut } else { SupVariant::Paper })?;
                bound += error_bound(l, z);
            }
        }
        if logged && monitor.lipschitz {
            diag.error_bound = Some(bound);
        }
        if logged {
            if let Some(opt) = self.problem.optimum() {
                diag.distance_to_optimum = Some(distance(&self.u, &opt));
            }
            if let Some(exact) = self.problem.exact_gradient(&self.u) {
                diag.gradient_error = Some(distance(&gradient, &exact));
            }
        }

        let next = csg_step(&self.u, &gradient, self.config.tau, self.problem.design_box());
        let design = std::mem::replace(&mut self.u, next);
        self.n = n;
        Ok(Step { iteration: n, design, gradient, objective, logged, diagnostics: logged.then_some(diag) })
    }
}

/// Runs CSG for `config.iterations` steps.
pub fn run_csg<P: Problem + ?Sized>(problem: &P, config: &CsgConfig) -> Result<Trajectory> {
    let mut solver = CsgSolver::new(problem, config.clone())?;
    let mut steps = Vec::with_capacity(config.iterations);
    while !solver.is_done() {
        steps.push(solver.step()?);
    }
    Ok(Trajectory { steps, final_design: solver.u })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        b: BoxDomain,
        m: MeasureSpec,
    }

    impl Quad {
        fn new() -> Self {
            Self { b: BoxDomain::cube(1, -5.0, 5.0).unwrap(), m: MeasureSpec::uniform(vec![-0.5], vec![0.5]).unwrap() }
        }
    }

    impl Problem for Quad {
        fn design_box(&self) -> &BoxDomain {
            &self.b
        }
        fn measure(&self, _: usize) -> &MeasureSpec {
            &self.m
        }
        fn integrand(&self, _: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = u[0] - x[0];
            0.5 * grad[0] * grad[0]
        }
        fn optimum(&self) -> Option<Vec<f64>> {
            Some(vec![0.0])
        }
    }

    fn hist(records: &[(f64, f64)]) -> History {
        let mut h = History::new(1, 1, 1);
        for &(u, x) in records {
            h.push(&[u], &[x], Some(&[0.5 * (u - x) * (u - x)]), &[u - x]).unwrap();
        }
        h
    }

    #[test]
    fn gradient_and_objective_estimates() {
        let h = hist(&[(0.0, -0.25), (0.0, 0.25)]);
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(estimate_gradient(&h, &w).unwrap(), vec![0.0]);
        assert!((estimate_objective(&h, &w).unwrap() - 1.0 / 32.0).abs() < 1e-16);
        let one = hist(&[(0.3, 0.1)]);
        let w1 = WeightVector::uniform(1);
        assert_eq!(estimate_gradient(&one, &w1).unwrap(), vec![0.3 - 0.1]);
        assert!(estimate_gradient(&h, &w1).is_err());
        let g = History::gradients_only(1, 1, 1);
        assert!(estimate_objective(&g, &WeightVector::uniform(0)).is_err());
    }

    #[test]
    fn step_examples() {
        let b = BoxDomain::cube(1, -5.0, 5.0).unwrap();
        assert_eq!(csg_step(&[4.9], &[1.0], 0.5, &b), vec![4.4]);
        assert_eq!(csg_step(&[-4.9], &[1.0], 0.5, &b), vec![-5.0]);
        assert_eq!(csg_step(&[1.5], &[0.0], 0.5, &b), vec![1.5]);
        assert_eq!(csg_step(&[1.5], &[3.0], 0.0, &b), vec![1.5]);
        assert_eq!(projected_gradient_norm(&[5.0], &[-1.0], &b), 0.0);
    }

    #[test]
    fn schedule_masks() {
        let s = LogSchedule::LogSpaced { per_decade: 10 }.iterations(100);
        assert_eq!(s.first(), Some(&1));
        assert_eq!(s.last(), Some(&100));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(LogSchedule::Every { stride: 5 }.iterations(12), vec![1, 5, 10, 12]);
    }

    #[test]
    fn zero_step_keeps_design() {
        let cfg = CsgConfig { tau: 0.0, iterations: 50, start: Some(vec![2.0]), ..CsgConfig::default() };
        let t = run_csg(&Quad::new(), &cfg).unwrap();
        assert_eq!(t.steps.len(), 50);
        assert!(t.steps.iter().all(|s| s.design == vec![2.0]));
    }

    #[test]
    fn converges_and_reproduces() {
        let cfg = CsgConfig { iterations: 2000, start: Some(vec![5.0]), seed: 7, ..CsgConfig::default() };
        let a = run_csg(&Quad::new(), &cfg).unwrap();
        let b = run_csg(&Quad::new(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.final_design[0].abs() < 0.05);
    }

    #[test]
    fn negation_flips_sign() {
        let q = Negated(Quad::new());
        let mut g = [0.0];
        let v = q.integrand(0, &[1.0], &[0.0], &mut g);
        assert_eq!((v, g[0]), (-0.5, -1.0));
    }
}
