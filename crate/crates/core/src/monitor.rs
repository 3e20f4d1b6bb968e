//! Online estimate of the gradient approximation error.
//!
//! With exact weights the error of the gradient estimate is bounded by
//! `L * sup_x Z_n(x)`, where `L` is the Lipschitz constant of the integrand
//! gradient and `Z_n(x)` is the distance from `(u_n, x)` to the nearest
//! record. Both factors are estimated from the history itself.

use serde::Serialize;

use crate::error::{domain, state, Result};
use crate::history::History;
use crate::measures::MeasureSpec;
use crate::metric::{product_distance, ProductMetric};
use crate::weights::Cells;

/// How `sup_x Z_n(x)` is approximated from the stored points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SupVariant {
    /// `max_k Z_n(x_k)`. Degenerates to the design spread when the design stalls,
    /// because the `k`-th record always contributes its own point.
    Paper,
    /// `max_k min_{j != k}` of the same distance.
    LeaveOneOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub z_sup_estimate: f64,
    pub lipschitz_estimate: f64,
    pub error_bound: f64,
    pub n: usize,
}

impl ErrorReport {
    pub fn new(z_sup_estimate: f64, lipschitz_estimate: f64, n: usize) -> Self {
        Self { z_sup_estimate, lipschitz_estimate, error_bound: error_bound(lipschitz_estimate, z_sup_estimate), n }
    }
}

pub fn error_bound(lipschitz: f64, z_sup: f64) -> f64 {
    lipschitz * z_sup
}

/// `Z_n(x)`: distance from `(u_n, x)` to the nearest record.
pub fn z_value(history: &History, u_n: &[f64], x: &[f64], metric: &ProductMetric) -> Result<f64> {
    if history.is_empty() {
        return state("Z_n of an empty history");
    }
    let mut query = u_n.to_vec();
    query.extend_from_slice(x);
    let mut best = f64::INFINITY;
    for r in history.records() {
        let mut p = r.design.to_vec();
        p.extend_from_slice(r.point);
        best = best.min(product_distance(metric, &query, &p)?);
    }
    Ok(best)
}

pub fn z_sup_estimate(history: &History, u_n: &[f64], metric: &ProductMetric, variant: SupVariant) -> Result<f64> {
    let cells = Cells::for_history(history, u_n, metric)?;
    z_sup_cells(&cells, variant)
}

pub fn z_sup_cells(cells: &Cells<'_>, variant: SupVariant) -> Result<f64> {
    let n = cells.len();
    match variant {
        SupVariant::Paper if n == 0 => state("Z estimate needs at least one record"),
        SupVariant::LeaveOneOut if n < 2 => state("leave-one-out Z estimate needs at least two records"),
        _ => {
            let tree = cells.tree();
            let z = (0..n)
                .map(|k| match variant {
                    SupVariant::Paper => tree.nearest_from_record(k).1,
                    SupVariant::LeaveOneOut => {
                        tree.nearest_excluding(cells.point(k), k).expect("two records").1
                    }
                })
                .fold(0.0, f64::max);
            Ok(z)
        }
    }
}

/// `max Z_n` over an inclusive grid with `per_axis` points per coordinate of
/// the measure's support box.
pub fn z_grid_sup(cells: &Cells<'_>, measure: &MeasureSpec, per_axis: usize) -> f64 {
    let support = measure.support();
    let d = support.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let (lo, hi) = (support.lo()[a], support.hi()[a]);
            if per_axis < 2 || lo == hi {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis).map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64).collect()
            }
        })
        .collect();
    let tree = cells.tree();
    let mut idx = vec![0usize; d];
    let mut q = vec![0.0; d];
    let mut sup: f64 = 0.0;
    loop {
        for a in 0..d {
            q[a] = axes[a][idx[a]];
        }
        sup = sup.max(tree.nearest(&q).expect("nonempty").1);
        let mut a = d;
        loop {
            if a == 0 {
                return sup;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Largest observed ratio `|grad_i - grad_j| / d((u_i, x_i), (u_j, x_j))`,
/// updated incrementally as records arrive.
#[derive(Clone, Debug, Default)]
pub struct LipschitzTracker {
    processed: usize,
    max_ratio: Option<f64>,
}

/// Pairs closer than this are skipped.
pub const DEGENERATE_PAIR_DISTANCE: f64 = 1e-12;

impl LipschitzTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Compares every record added since the last call against all earlier ones.
    pub fn update(&mut self, history: &History, metric: &ProductMetric) -> Result<()> {
        let dd = history.design_dim();
        if metric.dim() != dd + history.point_dim() {
            return domain("metric does not cover (design, point)");
        }
        let mut pi = vec![0.0; metric.dim()];
        let mut pj = vec![0.0; metric.dim()];
        for i in self.processed..history.len() {
            pi[..dd].copy_from_slice(history.design(i));
            pi[dd..].copy_from_slice(history.point(i));
            let gi = history.jacobian(i);
            for j in 0..i {
                pj[..dd].copy_from_slice(history.design(j));
                pj[dd..].copy_from_slice(history.point(j));
                let dist = product_distance(metric, &pi, &pj)?;
                if dist < DEGENERATE_PAIR_DISTANCE {
                    continue;
                }
                let gj = history.jacobian(j);
                let diff = gi.iter().zip(gj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let ratio = diff / dist;
                self.max_ratio = Some(self.max_ratio.map_or(ratio, |m| m.max(ratio)));
            }
        }
        self.processed = history.len();
        Ok(())
    }

    pub fn estimate(&self) -> Option<f64> {
        self.max_ratio
    }
}

pub fn lipschitz_estimate(history: &History, metric: &ProductMetric) -> Result<f64> {
    if history.len() < 2 {
        return state("Lipschitz estimate needs at least two records");
    }
    let mut t = LipschitzTracker::new();
    t.update(history, metric)?;
    match t.estimate() {
        Some(l) => Ok(l),
        None => state("all record pairs are degenerate"),
    }
}

/// Stop once the bound is below `tol` and at least `min_iterations` have run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingRule {
    pub tol: f64,
    pub min_iterations: usize,
}

impl StoppingRule {
    pub fn new(tol: f64, min_iterations: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return domain("stopping tolerance must be positive");
        }
        Ok(Self { tol, min_iterations })
    }

    pub fn should_stop(&self, bound: f64, n: usize) -> bool {
        should_stop(bound, self.tol, n, self.min_iterations)
    }
}

pub fn should_stop(bound: f64, tol: f64, n: usize, min_iterations: usize) -> bool {
    bound < tol && n >= min_iterations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric() -> ProductMetric {
        ProductMetric::design_point(1, 1, 1.0, 1.0).unwrap()
    }

    fn quad_history(design: &[f64], points: &[f64]) -> History {
        let mut h = History::new(1, 1, 1);
        for (&u, &x) in design.iter().zip(points) {
            h.push(&[u], &[x], Some(&[0.5 * (u - x) * (u - x)]), &[u - x]).unwrap();
        }
        h
    }

    #[test]
    fn z_value_examples() {
        let h = quad_history(&[0.3], &[0.1]);
        assert_eq!(z_value(&h, &[0.3], &[0.1], &metric()).unwrap(), 0.0);
        let h = quad_history(&[0.0, 0.0], &[0.0, 1.0]);
        assert_eq!(z_value(&h, &[0.0], &[0.5], &metric()).unwrap(), 0.5);
        let h = quad_history(&[0.2], &[0.1]);
        assert!((z_value(&h, &[0.45], &[0.1], &metric()).unwrap() - 0.25).abs() < 1e-15);
        assert!(z_value(&History::new(1, 1, 1), &[0.0], &[0.0], &metric()).is_err());
    }

    #[test]
    fn sup_examples() {
        let h = quad_history(&[0.2], &[0.1]);
        let z = z_sup_estimate(&h, &[0.5], &metric(), SupVariant::Paper).unwrap();
        assert!((z - 0.3).abs() < 1e-15);
        assert!(z_sup_estimate(&h, &[0.5], &metric(), SupVariant::LeaveOneOut).is_err());

        let h = quad_history(&[0.0, 0.0], &[0.0, 1.0]);
        assert_eq!(z_sup_estimate(&h, &[0.0], &metric(), SupVariant::Paper).unwrap(), 0.0);
        assert_eq!(z_sup_estimate(&h, &[0.0], &metric(), SupVariant::LeaveOneOut).unwrap(), 1.0);

        let h = quad_history(&[0.0, 0.0, 0.0], &[0.0, 0.5, 1.0]);
        assert_eq!(z_sup_estimate(&h, &[0.0], &metric(), SupVariant::LeaveOneOut).unwrap(), 0.5);
    }

    #[test]
    fn lipschitz_examples() {
        let h = quad_history(&[0.0; 5], &[-0.4, -0.1, 0.05, 0.2, 0.45]);
        let l = lipschitz_estimate(&h, &metric()).unwrap();
        assert!((l - 1.0).abs() < 1e-12);

        let mut h = History::new(1, 1, 1);
        h.push(&[0.0], &[0.0], Some(&[1.0]), &[3.0]).unwrap();
        h.push(&[0.5], &[0.3], Some(&[1.0]), &[3.0]).unwrap();
        assert_eq!(lipschitz_estimate(&h, &metric()).unwrap(), 0.0);

        let mut h = History::new(1, 1, 1);
        h.push(&[0.0], &[0.0], Some(&[0.0]), &[0.0]).unwrap();
        h.push(&[0.0], &[1.0], Some(&[0.0]), &[2.0]).unwrap();
        assert_eq!(lipschitz_estimate(&h, &metric()).unwrap(), 2.0);

        let mut h = History::new(1, 1, 1);
        h.push(&[0.0], &[0.0], Some(&[0.0]), &[0.0]).unwrap();
        h.push(&[0.0], &[0.0], Some(&[0.0]), &[1.0]).unwrap();
        assert!(lipschitz_estimate(&h, &metric()).is_err());
    }

    #[test]
    fn bound_and_stop() {
        assert!((error_bound(1.0, 0.3) - 0.3).abs() < 1e-16);
        assert_eq!(error_bound(2.5, 0.0), 0.0);
        let r = ErrorReport::new(0.3, 2.0, 7);
        assert_eq!(r.error_bound, 0.6);
        assert!(should_stop(0.0, 0.1, 10, 5));
        assert!(!should_stop(0.0, 0.1, 3, 5));
        assert!(!should_stop(1.0, 0.1, 10, 0));
        assert!(StoppingRule::new(0.0, 1).is_err());
    }

    #[test]
    fn grid_sup_dominates_point_estimate() {
        let h = quad_history(&[0.0, 0.0], &[-0.25, 0.25]);
        let cells = Cells::for_history(&h, &[0.0], &metric()).unwrap();
        let m = MeasureSpec::uniform(vec![-0.5], vec![0.5]).unwrap();
        let sup = z_grid_sup(&cells, &m, 201);
        assert!((sup - 0.25).abs() < 1e-12);
    }
}
