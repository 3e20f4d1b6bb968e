//! Objectives built from several integrals.
//!
//! [`SumOfIntegrals`] splits a separable integral into groups of coordinates
//! with independent histories. [`NestedObjective`] describes
//! `Phi( integral f1(u, x1, integral f2(u, x1, x2) mu2(dx2)) mu1(dx1) )`,
//! which [`NestedSolver`] optimizes with two weight sets: `alpha` over the
//! inner variable, `beta` over the outer one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csg::{csg_step, CsgConfig, LogSchedule, Problem, Step, Trajectory};
use crate::error::{domain, state, Result};
use crate::history::History;
use crate::measures::{rng_stream, BoxDomain, MeasureSpec, QuadratureRule, RngStream};
use crate::metric::{MetricBlock, ProductMetric};
use crate::weights::{Cells, WeightEngine, WeightScheme};

/// Sub-integrand of one group: `(group, coords, u, x_group, grad) -> value`.
pub type GroupIntegrand = dyn Fn(usize, &[usize], &[f64], &[f64], &mut [f64]) -> f64 + Send + Sync;

/// `J(u) = sum_g integral j_g(u, x_g) mu_g(dx_g)` where the groups partition
/// the integration coordinates.
pub struct SumOfIntegrals {
    design_box: BoxDomain,
    groups: Vec<Vec<usize>>,
    measures: Vec<MeasureSpec>,
    integrand: Box<GroupIntegrand>,
    exact_gradient: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
    optimum: Option<Vec<f64>>,
}

impl SumOfIntegrals {
    /// `measures[g]` is the distribution of the coordinates `groups[g]`, in that order.
    pub fn new(
        design_box: BoxDomain,
        point_dim: usize,
        groups: Vec<Vec<usize>>,
        measures: Vec<MeasureSpec>,
        integrand: Box<GroupIntegrand>,
    ) -> Result<Self> {
        validate_groups(&groups, point_dim)?;
        if measures.len() != groups.len() {
            return domain("one measure per group is required");
        }
        for (g, m) in groups.iter().zip(&measures) {
            if m.dim() != g.len() {
                return domain(format!("group of {} coordinates has a {}-dimensional measure", g.len(), m.dim()));
            }
        }
        Ok(Self { design_box, groups, measures, integrand, exact_gradient: None, optimum: None })
    }

    pub fn with_exact_gradient(mut self, f: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>) -> Self {
        self.exact_gradient = Some(f);
        self
    }

    pub fn with_optimum(mut self, u: Vec<f64>) -> Self {
        self.optimum = Some(u);
        self
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

impl Problem for SumOfIntegrals {
    fn design_box(&self) -> &BoxDomain {
        &self.design_box
    }

    fn parts(&self) -> usize {
        self.groups.len()
    }

    fn measure(&self, part: usize) -> &MeasureSpec {
        &self.measures[part]
    }

    fn integrand(&self, part: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        (self.integrand)(part, &self.groups[part], u, x, grad)
    }

    fn exact_gradient(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.exact_gradient.as_ref().map(|f| f(u))
    }

    fn optimum(&self) -> Option<Vec<f64>> {
        self.optimum.clone()
    }
}

/// Groups must be nonempty, disjoint and cover `0..point_dim`.
pub fn validate_groups(groups: &[Vec<usize>], point_dim: usize) -> Result<()> {
    if groups.is_empty() {
        return domain("at least one group is required");
    }
    let mut seen = vec![false; point_dim];
    for g in groups {
        if g.is_empty() {
            return domain("groups must not be empty");
        }
        for &i in g {
            if i >= point_dim {
                return domain(format!("coordinate {i} out of range for {point_dim} integration coordinates"));
            }
            if seen[i] {
                return domain(format!("coordinate {i} appears in more than one group"));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return domain(format!("coordinate {i} belongs to no group"));
    }
    Ok(())
}

/// Sum of the per-group gradient estimates, each from its own history.
pub fn sum_estimate<R: Rng + ?Sized>(
    histories: &[History],
    measures: &[MeasureSpec],
    u_n: &[f64],
    config: &CsgConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if histories.len() != measures.len() {
        return domain("one history per group is required");
    }
    let mut total = vec![0.0; u_n.len()];
    for (h, m) in histories.iter().zip(measures) {
        let metric =
            ProductMetric::design_point(u_n.len(), m.dim(), config.design_coefficient, config.point_coefficient)?;
        let engine = WeightEngine::new(config.scheme, m.clone())?;
        let cells = Cells::for_history(h, u_n, &metric)?;
        let w = engine.weights(&cells, rng);
        for (t, g) in total.iter_mut().zip(crate::csg::estimate_gradient(h, &w)?) {
            *t += g;
        }
    }
    Ok(total)
}

/// Two integral levels and a final pointwise transform.
///
/// Jacobians are row-major with one row per output.
pub trait NestedObjective {
    fn design_box(&self) -> &BoxDomain;
    fn outer_measure(&self) -> &MeasureSpec;
    fn inner_measure(&self) -> &MeasureSpec;
    /// Number of outputs of the inner integrand.
    fn inner_outputs(&self) -> usize;
    /// Number of outputs of the outer integrand, the input size of the transform.
    fn outer_outputs(&self) -> usize;

    /// `f2(u, x1, x2)` into `value` and its design Jacobian into `jac`.
    fn inner(&self, u: &[f64], x1: &[f64], x2: &[f64], value: &mut [f64], jac: &mut [f64]);

    /// `f1(u, x1, v)` with its design Jacobian and its Jacobian in `v`.
    fn outer(&self, u: &[f64], x1: &[f64], v: &[f64], value: &mut [f64], jac_u: &mut [f64], jac_v: &mut [f64]);

    /// `Phi(w)`, writing its gradient into `grad`.
    fn transform(&self, w: &[f64], grad: &mut [f64]) -> f64;

    fn design_dim(&self) -> usize {
        self.design_box().dim()
    }
}

/// Inner and outer estimates as of the iteration that created the record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageSnapshot {
    pub inner_value: Vec<f64>,
    pub inner_jacobian: Vec<f64>,
    pub outer_value: Vec<f64>,
    pub outer_design_jacobian: Vec<f64>,
    pub outer_inner_jacobian: Vec<f64>,
}

/// Records of a nested run.
///
/// The inner history stores `((u_k, x1_k), x2_k, f2, grad_u f2)`, treating
/// `x1` as part of the query context. The outer
/// history stores `(u_k, x1_k, f1, grad f1 + d3 f1 * g_k)` evaluated at the
/// snapshot, so assembly is a plain weighted sum.
#[derive(Clone, Debug)]
pub struct NestedHistory {
    pub inner: History,
    pub outer: History,
    pub snapshots: Vec<StageSnapshot>,
    outer_dim: usize,
}

impl NestedHistory {
    pub fn new(design_dim: usize, outer_dim: usize, inner_dim: usize, inner_outputs: usize, outer_outputs: usize) -> Self {
        Self {
            inner: History::with_context(design_dim + outer_dim, design_dim, inner_dim, inner_outputs),
            outer: History::new(design_dim, outer_dim, outer_outputs),
            snapshots: Vec::new(),
            outer_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    pub fn push_snapshot(&mut self, u: &[f64], x1: &[f64], snapshot: StageSnapshot) -> Result<()> {
        let dd = u.len();
        let m1 = snapshot.outer_value.len();
        let m2 = snapshot.inner_value.len();
        let mut term = snapshot.outer_design_jacobian.clone();
        for r in 0..m1 {
            for c in 0..dd {
                let mut s = 0.0;
                for k in 0..m2 {
                    s += snapshot.outer_inner_jacobian[r * m2 + k] * snapshot.inner_jacobian[k * dd + c];
                }
                term[r * dd + c] += s;
            }
        }
        self.outer.push(u, x1, Some(&snapshot.outer_value), &term)?;
        self.snapshots.push(snapshot);
        Ok(())
    }
}

/// Coefficients of the nearest-neighbor metric `c_u |du| + c_outer |dx1| + c_inner |dx2|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedMetric {
    pub design: f64,
    pub outer: f64,
    pub inner: f64,
}

impl Default for NestedMetric {
    fn default() -> Self {
        Self { design: 1.0, outer: 1.0, inner: 1.0 }
    }
}

impl NestedMetric {
    fn validate(&self) -> Result<()> {
        if [self.design, self.outer, self.inner].iter().all(|&c| c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            domain("metric coefficients must be positive")
        }
    }

    /// Metric of the inner history, over `(u, x1, x2)`.
    pub fn inner_metric(&self, design_dim: usize, outer_dim: usize, inner_dim: usize) -> Result<ProductMetric> {
        ProductMetric::new(vec![
            MetricBlock::new("u", design_dim, self.design),
            MetricBlock::new("x1", outer_dim, self.outer),
            MetricBlock::new("x2", inner_dim, self.inner),
        ])
    }
}

/// Inner estimates at context `(u_n, x1_n)`: `alpha` weights over the inner
/// measure with `x1` held at `x1_n`.
pub fn inner_estimates<R: Rng + ?Sized>(
    inner: &History,
    u_n: &[f64],
    x1_n: &[f64],
    metric: &NestedMetric,
    engine: &WeightEngine,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if inner.is_empty() {
        return state("inner estimates need a nonempty history");
    }
    if u_n.len() + x1_n.len() != inner.design_dim() || u_n.len() != inner.grad_dim() {
        return domain("query context does not match the inner history");
    }
    let pm = metric.inner_metric(u_n.len(), x1_n.len(), inner.point_dim())?;
    let mut context = u_n.to_vec();
    context.extend_from_slice(x1_n);
    let cells = Cells::for_history(inner, &context, &pm)?;
    let alpha = engine.weights(&cells, rng);
    Ok((
        crate::csg::estimate_values(inner, &alpha)?,
        crate::csg::estimate_gradient(inner, &alpha)?,
    ))
}

/// `beta` weights over the outer measure at `u_n`; returns the pre-transform
/// estimate `W_n` and the stacked design Jacobian `G_raw_n`.
pub fn outer_assemble<R: Rng + ?Sized>(
    history: &NestedHistory,
    u_n: &[f64],
    metric: &NestedMetric,
    engine: &WeightEngine,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if history.snapshots.len() != history.outer.len() {
        return state("every outer record needs a stage snapshot");
    }
    let m = ProductMetric::design_point(u_n.len(), history.outer_dim, metric.design, metric.outer)?;
    let cells = Cells::for_history(&history.outer, u_n, &m)?;
    let beta = engine.weights(&cells, rng);
    Ok((
        crate::csg::estimate_values(&history.outer, &beta)?,
        crate::csg::estimate_gradient(&history.outer, &beta)?,
    ))
}

/// `(Phi(W), grad Phi(W) * G_raw)`.
pub fn final_chain<N: NestedObjective + ?Sized>(objective: &N, w: &[f64], g_raw: &[f64]) -> (f64, Vec<f64>) {
    let m1 = w.len();
    let dd = g_raw.len() / m1.max(1);
    let mut dphi = vec![0.0; m1];
    let j = objective.transform(w, &mut dphi);
    let mut g = vec![0.0; dd];
    for (r, &d) in dphi.iter().enumerate() {
        for c in 0..dd {
            g[c] += d * g_raw[r * dd + c];
        }
    }
    (j, g)
}

/// Objective and gradient with both integrals replaced by fixed rules.
pub fn nested_quadrature<N: NestedObjective + ?Sized>(
    objective: &N,
    outer_rule: &QuadratureRule,
    inner_rule: &QuadratureRule,
    u: &[f64],
) -> (f64, Vec<f64>) {
    let dd = u.len();
    let m1 = objective.outer_outputs();
    let m2 = objective.inner_outputs();
    let mut w = vec![0.0; m1];
    let mut g_raw = vec![0.0; m1 * dd];
    let (mut v2, mut j2) = (vec![0.0; m2], vec![0.0; m2 * dd]);
    let (mut v1, mut j1u, mut j1v) = (vec![0.0; m1], vec![0.0; m1 * dd], vec![0.0; m1 * m2]);
    for (x1, b) in outer_rule.iter() {
        let mut f = vec![0.0; m2];
        let mut g = vec![0.0; m2 * dd];
        for (x2, a) in inner_rule.iter() {
            objective.inner(u, x1, x2, &mut v2, &mut j2);
            f.iter_mut().zip(&v2).for_each(|(s, v)| *s += a * v);
            g.iter_mut().zip(&j2).for_each(|(s, v)| *s += a * v);
        }
        objective.outer(u, x1, &f, &mut v1, &mut j1u, &mut j1v);
        for r in 0..m1 {
            w[r] += b * v1[r];
            for c in 0..dd {
                let mut t = j1u[r * dd + c];
                for k in 0..m2 {
                    t += j1v[r * m2 + k] * g[k * dd + c];
                }
                g_raw[r * dd + c] += b * t;
            }
        }
    }
    final_chain(objective, &w, &g_raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NestedConfig {
    pub tau: f64,
    pub iterations: usize,
    pub inner_scheme: WeightScheme,
    pub outer_scheme: WeightScheme,
    pub metric: NestedMetric,
    pub seed: u64,
    pub stream: u64,
    pub start: Option<Vec<f64>>,
    pub log: LogSchedule,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            iterations: 1000,
            inner_scheme: WeightScheme::Empirical,
            outer_scheme: WeightScheme::Empirical,
            metric: NestedMetric::default(),
            seed: 0,
            stream: 0,
            start: None,
            log: LogSchedule::default(),
        }
    }
}

/// CSG on a nested objective, one outer and one inner sample per iteration.
pub struct NestedSolver<'p, N: NestedObjective + ?Sized> {
    objective: &'p N,
    config: NestedConfig,
    rng: RngStream,
    u: Vec<f64>,
    n: usize,
    history: NestedHistory,
    inner_engine: WeightEngine,
    outer_engine: WeightEngine,
    mask: Vec<bool>,
}

impl<'p, N: NestedObjective + ?Sized> NestedSolver<'p, N> {
    pub fn new(objective: &'p N, config: NestedConfig) -> Result<Self> {
        if !(config.tau >= 0.0) || config.iterations == 0 {
            return domain("nested run needs tau >= 0 and at least one iteration");
        }
        config.metric.validate()?;
        let dd = objective.design_dim();
        let mut rng = rng_stream(config.seed, config.stream);
        let u = match &config.start {
            Some(s) if s.len() != dd => return domain("start does not match the design dimension"),
            Some(s) => {
                let mut s = s.clone();
                objective.design_box().clamp_in_place(&mut s);
                s
            }
            None => objective.design_box().sample(&mut rng),
        };
        let inner_engine = WeightEngine::new(config.inner_scheme, objective.inner_measure().clone())?;
        let outer_engine = WeightEngine::new(config.outer_scheme, objective.outer_measure().clone())?;
        let (d1, d2) = (objective.outer_measure().dim(), objective.inner_measure().dim());
        let history = NestedHistory::new(dd, d1, d2, objective.inner_outputs(), objective.outer_outputs());
        let mask = config.log.mask(config.iterations);
        Ok(Self { objective, config, rng, u, n: 0, history, inner_engine, outer_engine, mask })
    }

    pub fn design(&self) -> &[f64] {
        &self.u
    }

    pub fn history(&self) -> &NestedHistory {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.n >= self.config.iterations
    }

    pub fn step(&mut self) -> Result<Step> {
        let obj = self.objective;
        let n = self.n + 1;
        let dd = self.u.len();
        let (m1, m2) = (obj.outer_outputs(), obj.inner_outputs());
        let x1 = obj.outer_measure().sample(&mut self.rng);
        let x2 = obj.inner_measure().sample(&mut self.rng);

        let mut v2 = vec![0.0; m2];
        let mut j2 = vec![0.0; m2 * dd];
        obj.inner(&self.u, &x1, &x2, &mut v2, &mut j2);
        let mut context = self.u.clone();
        context.extend_from_slice(&x1);
        self.history.inner.push(&context, &x2, Some(&v2), &j2)?;

        let (f_hat, g_hat) = inner_estimates(
            &self.history.inner,
            &self.u,
            &x1,
            &self.config.metric,
            &self.inner_engine,
            &mut self.rng,
        )?;
        let mut v1 = vec![0.0; m1];
        let mut j1u = vec![0.0; m1 * dd];
        let mut j1v = vec![0.0; m1 * m2];
        obj.outer(&self.u, &x1, &f_hat, &mut v1, &mut j1u, &mut j1v);
        self.history.push_snapshot(
            &self.u,
            &x1,
            StageSnapshot {
                inner_value: f_hat,
                inner_jacobian: g_hat,
                outer_value: v1,
                outer_design_jacobian: j1u,
                outer_inner_jacobian: j1v,
            },
        )?;

        let (w, g_raw) = outer_assemble(&self.history, &self.u, &self.config.metric, &self.outer_engine, &mut self.rng)?;
        let (objective, gradient) = final_chain(obj, &w, &g_raw);
        let logged = self.mask.get(n).copied().unwrap_or(false);
        let next = csg_step(&self.u, &gradient, self.config.tau, obj.design_box());
        let design = std::mem::replace(&mut self.u, next);
        self.n = n;
        Ok(Step { iteration: n, design, gradient, objective, logged, diagnostics: None })
    }
}

pub fn run_nested<N: NestedObjective + ?Sized>(objective: &N, config: &NestedConfig) -> Result<Trajectory> {
    let mut solver = NestedSolver::new(objective, config.clone())?;
    let mut steps = Vec::with_capacity(config.iterations);
    while !solver.is_done() {
        steps.push(solver.step()?);
    }
    Ok(Trajectory { steps, final_design: solver.u })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Phi(w) = w`, `f1 = a * v + u`, `f2 = u * x2 + x1`.
    struct Linear {
        b: BoxDomain,
        mu1: MeasureSpec,
        mu2: MeasureSpec,
        a: f64,
    }

    impl Linear {
        fn new(a: f64) -> Self {
            Self {
                b: BoxDomain::cube(1, -5.0, 5.0).unwrap(),
                mu1: MeasureSpec::uniform(vec![0.0], vec![1.0]).unwrap(),
                mu2: MeasureSpec::uniform(vec![0.0], vec![1.0]).unwrap(),
                a,
            }
        }
    }

    impl NestedObjective for Linear {
        fn design_box(&self) -> &BoxDomain {
            &self.b
        }
        fn outer_measure(&self) -> &MeasureSpec {
            &self.mu1
        }
        fn inner_measure(&self) -> &MeasureSpec {
            &self.mu2
        }
        fn inner_outputs(&self) -> usize {
            1
        }
        fn outer_outputs(&self) -> usize {
            1
        }
        fn inner(&self, u: &[f64], x1: &[f64], x2: &[f64], value: &mut [f64], jac: &mut [f64]) {
            value[0] = u[0] * x2[0] + x1[0];
            jac[0] = x2[0];
        }
        fn outer(&self, u: &[f64], _x1: &[f64], v: &[f64], value: &mut [f64], jac_u: &mut [f64], jac_v: &mut [f64]) {
            value[0] = self.a * v[0] + u[0];
            jac_u[0] = 1.0;
            jac_v[0] = self.a;
        }
        fn transform(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = 1.0;
            w[0]
        }
    }

    #[test]
    fn inner_estimate_examples() {
        let metric = NestedMetric::default();
        let mut rng = rng_stream(0, 0);
        let mu2 = MeasureSpec::uniform(vec![0.0], vec![1.0]).unwrap();
        let grid = WeightEngine::new(WeightScheme::ExactGrid { resolution: 1000 }, mu2.clone()).unwrap();

        let mut h = History::with_context(2, 1, 1, 1);
        h.push(&[0.0, 0.5], &[0.0], Some(&[0.0]), &[0.0]).unwrap();
        h.push(&[0.0, 0.5], &[1.0], Some(&[1.0]), &[0.0]).unwrap();
        let (f, _) = inner_estimates(&h, &[0.0], &[0.5], &metric, &grid, &mut rng).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-12);

        let mut one = History::with_context(2, 1, 1, 1);
        one.push(&[0.3, 0.1], &[0.7], Some(&[4.0]), &[2.0]).unwrap();
        let emp = WeightEngine::new(WeightScheme::Empirical, mu2).unwrap();
        let (f, g) = inner_estimates(&one, &[1.0], &[0.9], &metric, &emp, &mut rng).unwrap();
        assert_eq!((f, g), (vec![4.0], vec![2.0]));
        assert!(inner_estimates(&History::with_context(2, 1, 1, 1), &[0.0], &[0.0], &metric, &emp, &mut rng).is_err());
    }

    #[test]
    fn single_record_assembly() {
        let obj = Linear::new(2.0);
        let cfg = NestedConfig { iterations: 1, tau: 0.0, start: Some(vec![1.0]), ..NestedConfig::default() };
        let mut s = NestedSolver::new(&obj, cfg).unwrap();
        let step = s.step().unwrap();
        let snap = &s.history().snapshots[0];
        let expected = snap.outer_design_jacobian[0] + snap.outer_inner_jacobian[0] * snap.inner_jacobian[0];
        assert_eq!(step.gradient, vec![expected]);
        assert_eq!(step.objective, snap.outer_value[0]);
    }

    #[test]
    fn assembly_is_repeatable() {
        let obj = Linear::new(1.0);
        let cfg = NestedConfig { iterations: 30, ..NestedConfig::default() };
        let mut s = NestedSolver::new(&obj, cfg).unwrap();
        for _ in 0..30 {
            s.step().unwrap();
        }
        let emp = WeightEngine::new(WeightScheme::Empirical, obj.mu1.clone()).unwrap();
        let mut rng = rng_stream(0, 1);
        let a = outer_assemble(s.history(), &[0.2], &NestedMetric::default(), &emp, &mut rng).unwrap();
        let b = outer_assemble(s.history(), &[0.2], &NestedMetric::default(), &emp, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_examples() {
        let obj = Linear::new(0.0);
        assert_eq!(final_chain(&obj, &[3.0], &[1.5]), (3.0, vec![1.5]));
    }

    #[test]
    fn quadrature_matches_closed_form() {
        // J(u) = a (u/2 + 1/2) + u
        let obj = Linear::new(2.0);
        let r = obj.mu1.tensor_rule(50).unwrap();
        let (j, g) = nested_quadrature(&obj, &r, &r, &[0.4]);
        assert!((j - (2.0 * 0.7 + 0.4)).abs() < 1e-12);
        assert!((g[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn group_validation() {
        assert!(validate_groups(&[vec![0, 1], vec![2]], 3).is_ok());
        assert!(validate_groups(&[vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(validate_groups(&[vec![0]], 2).is_err());
        assert!(validate_groups(&[vec![0, 3]], 2).is_err());
    }
}
