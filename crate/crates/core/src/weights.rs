//! Integration weights over a sample history.
//!
//! Record `k` owns the cell of integration points `x` for which
//! `(u_n, x)` is closer to `(u_k, x_k)` than to any other record. Its weight
//! is the mass of that cell under one of three measures: the empirical measure
//! of the stored points, the true measure resolved on an equal-mass grid, or
//! the empirical measure of fresh Monte-Carlo samples.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, state, CsgError, Result};
use crate::history::History;
use crate::measures::{MeasureSpec, QuadratureRule};
use crate::metric::{accumulate_blocks, ProductMetric};
use crate::neighbors::{brute_nearest, sweep_assign_1d, BlockNorm, Neighbors};

/// Total grid cells of exact weights when no per-axis resolution is given.
pub const DEFAULT_GRID_CELLS: usize = 100_000;

/// Nonnegative weights over the records of a history, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return domain("weights must be nonnegative");
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn l1_distance(&self, other: &WeightVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Builds weights from per-query owners. Queries of equal mass are counted
    /// and divided once, so a cell owning every query gets weight exactly 1.
    fn from_owners(n: usize, owners: &[usize], masses: Option<&[f64]>) -> Self {
        let mut w = vec![0.0; n];
        match masses {
            Some(masses) => {
                for (&k, &m) in owners.iter().zip(masses) {
                    w[k] += m;
                }
            }
            None => {
                let mut counts = vec![0usize; n];
                for &k in owners {
                    counts[k] += 1;
                }
                let total = owners.len() as f64;
                for (wk, c) in w.iter_mut().zip(counts) {
                    *wk = c as f64 / total;
                }
            }
        }
        Self(w)
    }
}

/// Which measure the cell masses are taken under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum WeightScheme {
    Empirical,
    /// Cells per axis of the equal-mass grid; 0 picks about
    /// [`DEFAULT_GRID_CELLS`] cells in total.
    ExactGrid { resolution: usize },
    /// Fresh samples per weight computation.
    Mc { samples: usize },
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Empirical
    }
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Empirical => "empirical",
            WeightScheme::ExactGrid { .. } => "exact-grid",
            WeightScheme::Mc { .. } => "mc",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = CsgError;

    /// `empirical`, `exact-grid[:cells per axis]` or `mc[:samples]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, count) = match s.split_once(':') {
            Some((n, c)) => match c.parse::<usize>() {
                Ok(c) => (n, Some(c)),
                Err(_) => return domain(format!("bad count in weight scheme '{s}'")),
            },
            None => (s, None),
        };
        match (name, count) {
            ("empirical", None) => Ok(WeightScheme::Empirical),
            ("exact-grid", c) => Ok(WeightScheme::ExactGrid { resolution: c.unwrap_or(0) }),
            ("mc", c) => Ok(WeightScheme::Mc { samples: c.unwrap_or(1000) }),
            _ => domain(format!("unknown weight scheme '{s}' (expected empirical, exact-grid[:n] or mc[:n])")),
        }
    }
}

/// Nearest-neighbor cells of a record set for one fixed query context.
///
/// `offsets[k]` is the distance of record `k`'s context (design, and any
/// coordinates held fixed during the integration) to the query context;
/// `points` are the records' integration coordinates.
pub struct Cells<'a> {
    norm: BlockNorm,
    points: &'a [f64],
    offsets: Vec<f64>,
    sorted: Option<&'a [usize]>,
}

impl<'a> Cells<'a> {
    pub fn new(norm: BlockNorm, points: &'a [f64], offsets: Vec<f64>, sorted: Option<&'a [usize]>) -> Self {
        debug_assert_eq!(points.len(), offsets.len() * norm.dim());
        let sorted = sorted.filter(|_| norm.dim() == 1 && norm.blocks().len() == 1);
        Self { norm, points, offsets, sorted }
    }

    /// Cells of a single-level history for query design `u_n`.
    pub fn for_history(history: &'a History, u_n: &[f64], metric: &ProductMetric) -> Result<Self> {
        if history.is_empty() {
            return state("weights need a nonempty history");
        }
        if u_n.len() != history.design_dim() {
            return domain(format!(
                "query design has {} entries, history designs have {}",
                u_n.len(),
                history.design_dim()
            ));
        }
        if metric.dim() != history.design_dim() + history.point_dim() {
            return domain("metric does not cover (design, point)");
        }
        let (context, integrated) = metric.split_at(history.design_dim())?;
        let context: Vec<(usize, f64)> = context.iter().map(|b| (b.dim, b.coefficient)).collect();
        let norm = BlockNorm::new(integrated.iter().map(|b| (b.dim, b.coefficient)).collect());
        let offsets = history
            .designs()
            .chunks_exact(history.design_dim())
            .map(|u_k| accumulate_blocks(&context, 0.0, u_n, u_k))
            .collect();
        Ok(Self::new(norm, history.points(), offsets, history.sorted_order()))
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn norm(&self) -> &BlockNorm {
        &self.norm
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn points(&self) -> &[f64] {
        self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.norm.dim();
        &self.points[k * d..(k + 1) * d]
    }

    pub fn tree(&self) -> Neighbors<'_> {
        Neighbors::new(&self.norm, self.points, &self.offsets)
    }

    /// Owner of every query, queries given row-major. One-dimensional queries
    /// must be sorted ascending when `sorted_queries` is set.
    pub fn assign(&self, queries: &[f64], sorted_queries: bool) -> Vec<usize> {
        if let (Some(order), true) = (self.sorted, sorted_queries) {
            return sweep_assign_1d(self.norm.blocks()[0].1, self.points, &self.offsets, order, queries);
        }
        let tree = self.tree();
        queries
            .chunks_exact(self.norm.dim())
            .map(|q| tree.nearest(q).expect("nonempty record set").0)
            .collect()
    }

    /// Weights under the empirical measure of the records' own points.
    pub fn empirical(&self) -> WeightVector {
        let n = self.len();
        let owners: Vec<usize> = match self.sorted {
            Some(order) => {
                let queries: Vec<f64> = order.iter().map(|&k| self.points[k]).collect();
                sweep_assign_1d(self.norm.blocks()[0].1, self.points, &self.offsets, order, &queries)
            }
            None => {
                let tree = self.tree();
                (0..n).map(|k| tree.nearest_from_record(k).0).collect()
            }
        };
        WeightVector::from_owners(n, &owners, None)
    }

    /// Cell masses resolved on a quadrature grid.
    pub fn on_rule(&self, rule: &QuadratureRule) -> WeightVector {
        let sorted = rule.dim() == 1 && rule.nodes().windows(2).all(|w| w[0] <= w[1]);
        let owners = self.assign(rule.nodes(), sorted);
        let masses = rule.masses();
        let equal = masses.iter().all(|&m| m == masses[0]);
        WeightVector::from_owners(self.len(), &owners, (!equal).then_some(masses))
    }

    /// Cell masses estimated from `m` fresh samples of `measure`.
    pub fn monte_carlo<R: Rng + ?Sized>(&self, measure: &MeasureSpec, m: usize, rng: &mut R) -> WeightVector {
        let m = m.max(1);
        let d = measure.dim();
        let mut samples = vec![0.0; m * d];
        for chunk in samples.chunks_exact_mut(d) {
            measure.sample_into(rng, chunk);
        }
        if d == 1 {
            samples.sort_by(f64::total_cmp);
        }
        let owners = self.assign(&samples, d == 1);
        WeightVector::from_owners(self.len(), &owners, None)
    }
}

/// Record (1-based) closest to the concatenated query `(u, x)`, by linear scan.
pub fn nearest_index(history: &History, query: &[f64], metric: &ProductMetric) -> Result<usize> {
    if history.is_empty() {
        return state("nearest record of an empty history");
    }
    let dd = history.design_dim();
    if query.len() != dd + history.point_dim() || metric.dim() != query.len() {
        return domain("query does not match the history/metric shape");
    }
    let (context, integrated) = metric.split_at(dd)?;
    let context: Vec<(usize, f64)> = context.iter().map(|b| (b.dim, b.coefficient)).collect();
    let norm = BlockNorm::new(integrated.iter().map(|b| (b.dim, b.coefficient)).collect());
    let offsets: Vec<f64> = history
        .designs()
        .chunks_exact(dd)
        .map(|u_k| accumulate_blocks(&context, 0.0, &query[..dd], u_k))
        .collect();
    let (k, _) = brute_nearest(&norm, history.points(), &offsets, &query[dd..], None).expect("nonempty");
    Ok(k + 1)
}

pub fn empirical_weights(history: &History, u_n: &[f64], metric: &ProductMetric) -> Result<WeightVector> {
    Ok(Cells::for_history(history, u_n, metric)?.empirical())
}

pub fn exact_weights_grid(
    history: &History,
    u_n: &[f64],
    metric: &ProductMetric,
    measure: &MeasureSpec,
    resolution: usize,
) -> Result<WeightVector> {
    let rule = grid_rule(measure, resolution)?;
    if rule.dim() != history.point_dim() {
        return domain("measure dimension does not match the history points");
    }
    Ok(Cells::for_history(history, u_n, metric)?.on_rule(&rule))
}

pub fn mc_weights<R: Rng + ?Sized>(
    history: &History,
    u_n: &[f64],
    metric: &ProductMetric,
    measure: &MeasureSpec,
    m: usize,
    rng: &mut R,
) -> Result<WeightVector> {
    if m == 0 {
        return domain("Monte-Carlo weights need at least one sample");
    }
    if measure.dim() != history.point_dim() {
        return domain("measure dimension does not match the history points");
    }
    Ok(Cells::for_history(history, u_n, metric)?.monte_carlo(measure, m, rng))
}

/// Equal-mass tensor grid used by the exact weights.
pub fn grid_rule(measure: &MeasureSpec, resolution: usize) -> Result<QuadratureRule> {
    let dim = measure.dim() as i32;
    let resolution = match resolution {
        0 => ((DEFAULT_GRID_CELLS as f64).powf(1.0 / dim as f64).floor() as usize).max(10),
        r if r < 10 => return domain(format!("grid resolution must be at least 10, got {r}")),
        r => r,
    };
    if (resolution as f64).powi(dim) > 5e7 {
        return domain(format!("a {dim}-dimensional grid with {resolution} cells per axis is too large"));
    }
    measure.tensor_rule(resolution)
}

/// Weight computation with per-run caches (the exact-grid rule).
pub struct WeightEngine {
    scheme: WeightScheme,
    measure: MeasureSpec,
    rule: Option<QuadratureRule>,
}

impl WeightEngine {
    pub fn new(scheme: WeightScheme, measure: MeasureSpec) -> Result<Self> {
        let rule = match scheme {
            WeightScheme::ExactGrid { resolution } => Some(grid_rule(&measure, resolution)?),
            WeightScheme::Mc { samples: 0 } => return domain("Monte-Carlo weights need at least one sample"),
            _ => None,
        };
        Ok(Self { scheme, measure, rule })
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn weights<R: Rng + ?Sized>(&self, cells: &Cells<'_>, rng: &mut R) -> WeightVector {
        match self.scheme {
            WeightScheme::Empirical => cells.empirical(),
            WeightScheme::ExactGrid { .. } => cells.on_rule(self.rule.as_ref().expect("grid built")),
            WeightScheme::Mc { samples } => cells.monte_carlo(&self.measure, samples, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::rng_stream;

    fn same_design(points: &[f64]) -> History {
        let mut h = History::new(1, 1, 1);
        for &x in points {
            h.push(&[0.0], &[x], Some(&[0.0]), &[0.0]).unwrap();
        }
        h
    }

    fn metric() -> ProductMetric {
        ProductMetric::design_point(1, 1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn nearest_index_examples() {
        let h = same_design(&[0.3]);
        assert_eq!(nearest_index(&h, &[0.0, 5.0], &metric()).unwrap(), 1);
        let h = same_design(&[0.0, 1.0]);
        assert_eq!(nearest_index(&h, &[0.0, 0.4], &metric()).unwrap(), 1);
        let h = same_design(&[0.2, 0.2]);
        assert_eq!(nearest_index(&h, &[0.0, 0.9], &metric()).unwrap(), 1);
        assert!(nearest_index(&History::new(1, 1, 1), &[0.0, 0.0], &metric()).is_err());
    }

    #[test]
    fn empirical_examples() {
        let w = empirical_weights(&same_design(&[0.1]), &[0.0], &metric()).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
        let w = empirical_weights(&same_design(&[0.0, 1.0]), &[0.0], &metric()).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = empirical_weights(&same_design(&[0.0, 0.1, 1.0]), &[0.0], &metric()).unwrap();
        for &a in w.as_slice() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_grid_examples() {
        let uniform = MeasureSpec::uniform(vec![-0.5], vec![0.5]).unwrap();
        let w = exact_weights_grid(&same_design(&[0.1]), &[0.0], &metric(), &uniform, 1000).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
        let res = 1000;
        let w = exact_weights_grid(&same_design(&[-0.25, 0.25]), &[0.0], &metric(), &uniform, res).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() <= 1.0 / res as f64);
        assert!((w.sum() - 1.0).abs() < 1e-12);

        // design offsets 0 and 0.2 move the boundary to x = 0.1
        let mut h = History::new(1, 1, 1);
        h.push(&[0.0], &[-0.25], Some(&[0.0]), &[0.0]).unwrap();
        h.push(&[0.2], &[0.25], Some(&[0.0]), &[0.0]).unwrap();
        let w = exact_weights_grid(&h, &[0.0], &metric(), &uniform, res).unwrap();
        assert!((w.as_slice()[0] - 0.6).abs() <= 1.0 / res as f64);
        assert!((w.as_slice()[1] - 0.4).abs() <= 1.0 / res as f64);

        assert!(exact_weights_grid(&h, &[0.0], &metric(), &uniform, 5).is_err());
    }

    #[test]
    fn mc_examples() {
        let mut rng = rng_stream(1, 0);
        let h = same_design(&[-0.25, 0.25]);
        let pm = MeasureSpec::point_mass(vec![0.2]).unwrap();
        let w = mc_weights(&h, &[0.0], &metric(), &pm, 10, &mut rng).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0]);
        let uniform = MeasureSpec::uniform(vec![-0.5], vec![0.5]).unwrap();
        let m = 40_000;
        let w = mc_weights(&h, &[0.0], &metric(), &uniform, m, &mut rng).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 3.0 / (m as f64).sqrt());
        let w = mc_weights(&same_design(&[0.4]), &[0.0], &metric(), &uniform, 7, &mut rng).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in ["empirical", "exact-grid", "mc"] {
            assert_eq!(s.parse::<WeightScheme>().unwrap().name(), s);
        }
        assert!("voronoi".parse::<WeightScheme>().is_err());
        assert_eq!("exact-grid:200".parse::<WeightScheme>().unwrap(), WeightScheme::ExactGrid { resolution: 200 });
        assert_eq!("mc:7".parse::<WeightScheme>().unwrap(), WeightScheme::Mc { samples: 7 });
        assert!("empirical:3".parse::<WeightScheme>().is_err());
        assert!("mc:x".parse::<WeightScheme>().is_err());
    }

    #[test]
    fn automatic_grid_size() {
        let square = MeasureSpec::uniform(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(grid_rule(&square, 0).unwrap().len(), 316 * 316);
        let line = MeasureSpec::uniform(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(grid_rule(&line, 0).unwrap().len(), DEFAULT_GRID_CELLS);
        assert!(grid_rule(&line, 5).is_err());
    }
}
