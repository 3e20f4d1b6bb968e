//! Objective estimators at a fixed design, indexed by integrand evaluations.

use rand::Rng;
use serde::Serialize;

use crate::composite::{NestedConfig, NestedObjective, NestedSolver};
use crate::error::{domain, Result};

/// One point of an estimate series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatePoint {
    /// Cumulative integrand evaluations, inner and outer.
    pub evaluations: usize,
    pub estimate: f64,
}

/// Nested Monte-Carlo plug-in estimate. After `s` rounds it holds `s` outer
/// and `s` inner samples; every outer sample averages the inner integrand
/// over all inner samples, so round `s` has used `s^2` inner and `s` outer
/// evaluations. Rounds continue while that count stays within `evaluations`.
pub fn mc_objective_estimator<N: NestedObjective + ?Sized, R: Rng + ?Sized>(
    objective: &N,
    u: &[f64],
    evaluations: usize,
    rng: &mut R,
) -> Result<Vec<EstimatePoint>> {
    if evaluations < 2 {
        return domain("the nested estimator needs at least two evaluations");
    }
    let dd = u.len();
    let (m1, m2) = (objective.outer_outputs(), objective.inner_outputs());
    let mut outer: Vec<Vec<f64>> = Vec::new();
    let mut inner: Vec<Vec<f64>> = Vec::new();
    // running inner sums, one per outer sample
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let (mut v2, mut j2) = (vec![0.0; m2], vec![0.0; m2 * dd]);
    let (mut v1, mut j1u, mut j1v) = (vec![0.0; m1], vec![0.0; m1 * dd], vec![0.0; m1 * m2]);
    let mut grad = vec![0.0; m1];
    let mut series = Vec::new();
    let mut s = 1;
    while s * s + s <= evaluations {
        let x1 = objective.outer_measure().sample(rng);
        let x2 = objective.inner_measure().sample(rng);
        let mut sum = vec![0.0; m2];
        for x in &inner {
            objective.inner(u, &x1, x, &mut v2, &mut j2);
            sum.iter_mut().zip(&v2).for_each(|(a, b)| *a += b);
        }
        outer.push(x1);
        sums.push(sum);
        inner.push(x2);
        let x2 = inner.last().expect("just pushed");
        for (x1, sum) in outer.iter().zip(sums.iter_mut()) {
            objective.inner(u, x1, x2, &mut v2, &mut j2);
            sum.iter_mut().zip(&v2).for_each(|(a, b)| *a += b);
        }
        let mut w = vec![0.0; m1];
        for (x1, sum) in outer.iter().zip(&sums) {
            let f: Vec<f64> = sum.iter().map(|v| v / s as f64).collect();
            objective.outer(u, x1, &f, &mut v1, &mut j1u, &mut j1v);
            w.iter_mut().zip(&v1).for_each(|(a, b)| *a += b / s as f64);
        }
        series.push(EstimatePoint { evaluations: s * s + s, estimate: objective.transform(&w, &mut grad) });
        s += 1;
    }
    Ok(series)
}

/// Objective estimates of CSG with `tau = 0` started at the design in
/// `config`. Each iteration evaluates the inner and the outer integrand once.
pub fn csg_objective_series<N: NestedObjective + ?Sized>(objective: &N, config: &NestedConfig) -> Result<Vec<EstimatePoint>> {
    if config.start.is_none() {
        return domain("the estimate series needs a fixed design");
    }
    let mut config = config.clone();
    config.tau = 0.0;
    let mut solver = NestedSolver::new(objective, config)?;
    let mut series = Vec::new();
    while !solver.is_done() {
        let step = solver.step()?;
        series.push(EstimatePoint { evaluations: 2 * step.iteration, estimate: step.objective });
    }
    Ok(series)
}

/// Smallest evaluation count from which every later estimate stays within
/// `relative` of `reference`; `None` if the last one does not.
pub fn evaluations_to_tolerance(series: &[EstimatePoint], reference: f64, relative: f64) -> Option<usize> {
    let within = |p: &EstimatePoint| (p.estimate - reference).abs() <= relative * reference.abs();
    let outside = series.iter().rposition(|p| !within(p));
    match outside {
        None => series.first().map(|p| p.evaluations),
        Some(i) => series.get(i + 1).map(|p| p.evaluations),
    }
}
