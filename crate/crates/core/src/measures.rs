//! Measure descriptors, samplers and quadrature rules.
//!
//! The integration variables of every problem in this crate live on boxes and
//! are distributed either uniformly, as a product of truncated normals, or as
//! a point mass. Each measure can draw samples and can be discretized into an
//! equal-mass tensor grid, which the exact-grid integration weights use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{domain, Result};

/// Random stream owned by a single optimization run.
pub type RngStream = ChaCha8Rng;

/// Derives the random stream for run `index` of an experiment seeded with `base_seed`.
pub fn rng_stream(base_seed: u64, index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Default truncation radius, in standard deviations.
pub const DEFAULT_TRUNCATION: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalDomain {
    pub lo: f64,
    pub hi: f64,
}

impl IntervalDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return domain(format!("interval requires lo < hi, got [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return domain(format!(
                "box bounds must be nonempty and of equal length (got {} and {})",
                lo.len(),
                hi.len()
            ));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            IntervalDomain::new(l, h).map_err(|_| {
                crate::CsgError::Domain(format!("box coordinate {i}: need lo < hi, got [{l}, {h}]"))
            })?;
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn interval(&self, i: usize) -> IntervalDomain {
        IntervalDomain { lo: self.lo[i], hi: self.hi[i] }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| l <= v && v <= h)
    }

    pub fn clamp_in_place(&self, p: &mut [f64]) {
        for (v, (&l, &h)) in p.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(l, h);
        }
    }

    /// Uniform point in the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| l + (h - l) * rng.gen::<f64>()).collect()
    }
}

/// Probability measure of an integration variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureSpec {
    UniformBox(BoxDomain),
    /// Product of independent normals, each truncated to `mean ± radius * sd`.
    TruncatedNormal { means: Vec<f64>, sds: Vec<f64>, radius: f64 },
    PointMass { location: Vec<f64> },
}

impl MeasureSpec {
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Ok(MeasureSpec::UniformBox(BoxDomain::new(lo, hi)?))
    }

    pub fn truncated_normal(means: Vec<f64>, sds: Vec<f64>, radius: f64) -> Result<Self> {
        let m = MeasureSpec::TruncatedNormal { means, sds, radius };
        m.validate()?;
        Ok(m)
    }

    pub fn point_mass(location: Vec<f64>) -> Result<Self> {
        let m = MeasureSpec::PointMass { location };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureSpec::UniformBox(b) => BoxDomain::new(b.lo.clone(), b.hi.clone()).map(|_| ()),
            MeasureSpec::TruncatedNormal { means, sds, radius } => {
                if means.is_empty() || means.len() != sds.len() {
                    return domain("truncated normal needs equal-length, nonempty means and sds");
                }
                if sds.iter().any(|&s| !(s > 0.0)) {
                    return domain("truncated normal standard deviations must be positive");
                }
                if !(*radius > 0.0) {
                    return domain("truncation radius must be positive");
                }
                Ok(())
            }
            MeasureSpec::PointMass { location } => {
                if location.is_empty() {
                    return domain("point mass needs a location");
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::UniformBox(b) => b.dim(),
            MeasureSpec::TruncatedNormal { means, .. } => means.len(),
            MeasureSpec::PointMass { location } => location.len(),
        }
    }

    /// Smallest box containing the support.
    pub fn support(&self) -> BoxDomain {
        match self {
            MeasureSpec::UniformBox(b) => b.clone(),
            MeasureSpec::TruncatedNormal { means, sds, radius } => BoxDomain {
                lo: means.iter().zip(sds).map(|(m, s)| m - radius * s).collect(),
                hi: means.iter().zip(sds).map(|(m, s)| m + radius * s).collect(),
            },
            MeasureSpec::PointMass { location } => {
                BoxDomain { lo: location.clone(), hi: location.clone() }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            MeasureSpec::UniformBox(b) => {
                for (o, (&l, &h)) in out.iter_mut().zip(b.lo.iter().zip(&b.hi)) {
                    *o = l + (h - l) * rng.gen::<f64>();
                }
            }
            MeasureSpec::TruncatedNormal { means, sds, radius } => {
                let p_lo = std_normal_cdf(-radius);
                let p_hi = std_normal_cdf(*radius);
                for (o, (&m, &s)) in out.iter_mut().zip(means.iter().zip(sds)) {
                    // inverse-cdf sampling restricted to the truncation window
                    let mut p = p_lo + (p_hi - p_lo) * rng.gen::<f64>();
                    if p <= 0.0 {
                        p = f64::MIN_POSITIVE;
                    }
                    let z = std_normal_quantile(p).unwrap_or(0.0).clamp(-radius, *radius);
                    *o = m + s * z;
                }
            }
            MeasureSpec::PointMass { location } => out.copy_from_slice(location),
        }
    }

    /// One-dimensional equal-mass rule for coordinate `axis`.
    pub fn marginal_rule(&self, axis: usize, n: usize) -> Result<QuadratureRule> {
        if axis >= self.dim() {
            return domain(format!("axis {axis} out of range for a {}-dimensional measure", self.dim()));
        }
        match self {
            MeasureSpec::UniformBox(b) => uniform_grid(&b.interval(axis), n),
            MeasureSpec::TruncatedNormal { means, sds, radius } => {
                equal_mass_nodes(means[axis], sds[axis], n, *radius)
            }
            MeasureSpec::PointMass { location } => {
                if n == 0 {
                    return domain("quadrature needs at least one node");
                }
                Ok(QuadratureRule { dim: 1, nodes: vec![location[axis]], masses: vec![1.0] })
            }
        }
    }

    /// Tensor product of the marginal equal-mass rules with `per_axis` nodes per coordinate.
    pub fn tensor_rule(&self, per_axis: usize) -> Result<QuadratureRule> {
        let marginals = (0..self.dim())
            .map(|a| self.marginal_rule(a, per_axis))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuadratureRule::tensor(&marginals))
    }
}

/// Weighted point set approximating a probability measure.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    masses: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(dim: usize, nodes: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * masses.len() {
            return domain("quadrature nodes and masses disagree in count");
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return domain("quadrature masses must be nonnegative");
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("quadrature masses sum to {total}, expected 1"));
        }
        Ok(Self { dim, nodes, masses })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    /// All nodes, row-major.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.masses.iter().copied())
    }

    /// Product rule; the last factor varies fastest.
    pub fn tensor(factors: &[QuadratureRule]) -> QuadratureRule {
        let dim: usize = factors.iter().map(|f| f.dim).sum();
        let mut nodes = Vec::new();
        let mut masses = vec![1.0];
        let mut partial: Vec<Vec<f64>> = vec![Vec::new()];
        for f in factors {
            let mut next_nodes = Vec::with_capacity(partial.len() * f.len());
            let mut next_masses = Vec::with_capacity(partial.len() * f.len());
            for (p, &pm) in partial.iter().zip(&masses) {
                for (node, m) in f.iter() {
                    let mut q = p.clone();
                    q.extend_from_slice(node);
                    next_nodes.push(q);
                    next_masses.push(pm * m);
                }
            }
            partial = next_nodes;
            masses = next_masses;
        }
        for p in partial {
            nodes.extend(p);
        }
        QuadratureRule { dim, nodes, masses }
    }
}

/// Standard normal distribution function.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile needs 0 < p < 1, got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // the inverse is only accurate to ~1e-11; polish against the distribution function
    for _ in 0..2 {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density < 1e-300 {
            break;
        }
        z -= (std_normal_cdf(z) - p) / density;
    }
    Ok(z)
}

/// Equal-mass nodes for a normal with the given mean and standard deviation.
///
/// `(0, 1)` is cut into `n` intervals of equal probability, their preimages
/// under the untruncated distribution function are clipped to
/// `mean ± radius * sd`, and each node is the midpoint of its clipped
/// preimage. Every node carries mass `1/n`.
pub fn equal_mass_nodes(mean: f64, sd: f64, n: usize, radius: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return domain("equal-mass quadrature needs at least one node");
    }
    if !(sd > 0.0) || !(radius > 0.0) {
        return domain("equal-mass quadrature needs sd > 0 and radius > 0");
    }
    let boundary = |i: usize| -> f64 {
        if i == 0 {
            -radius
        } else if i == n {
            radius
        } else {
            std_normal_quantile(i as f64 / n as f64).expect("interior probability").clamp(-radius, radius)
        }
    };
    let nodes = (0..n).map(|i| mean + sd * 0.5 * (boundary(i) + boundary(i + 1))).collect();
    Ok(QuadratureRule { dim: 1, nodes, masses: vec![1.0 / n as f64; n] })
}

/// Midpoints of `n` equal subintervals, each with mass `1/n`.
pub fn uniform_grid(domain_: &IntervalDomain, n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return domain("uniform grid needs at least one node");
    }
    let h = domain_.length() / n as f64;
    let nodes = (0..n).map(|i| domain_.lo + (i as f64 + 0.5) * h).collect();
    Ok(QuadratureRule { dim: 1, nodes, masses: vec![1.0 / n as f64; n] })
}
