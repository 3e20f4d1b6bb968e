//! The bright-red paint problem: choose core radius `R` and shell thickness
//! `d` of the pigment particles to maximize `c_L L + c_a a` of the film.
//!
//! Particle sizes scatter around the design, `R~ = R (1 + eta_R)` and
//! `d~ = d (1 + eta_d)` with `eta` truncated normal, so the design enters
//! through a fixed measure and the chain factor `1 + eta`. The film color is
//! a nested integral: `K` and `S` are averaged over `eta` for each
//! wavelength, the Saunderson-corrected reflectance is integrated against
//! the color matching functions over wavelength, and CIELAB is applied last.

use crate::composite::{nested_quadrature, NestedObjective};
use crate::error::{domain, Result};
use crate::measures::{uniform_grid, BoxDomain, IntervalDomain, MeasureSpec, QuadratureRule, DEFAULT_TRUNCATION};

use super::cmf::{CmfTable, LAMBDA_MAX, LAMBDA_MIN};
use super::km::{km_reflectance, saunderson, SaundersonParams};
use super::lab::{lab_from_xyz, Lab, WhitePoint};
use super::optics::{Optics, SurrogateOptics, EVAL_RADIUS, EVAL_THICKNESS, RADIUS_RANGE, THICKNESS_RANGE};

/// Relative standard deviation of particle radius and shell thickness.
pub const RELATIVE_SD: f64 = 0.1;

/// Wavelength and per-axis perturbation nodes of the reference quadrature.
pub const REFERENCE_GRID: (usize, usize) = (200, 64);

pub struct PaintObjective {
    design_box: BoxDomain,
    lambda: MeasureSpec,
    eta: MeasureSpec,
    cmf: CmfTable,
    optics: Box<dyn Optics>,
    film: SaundersonParams,
    white: WhitePoint,
    c_l: f64,
    c_a: f64,
    scale: f64,
}

/// Minimization form of `max c_L L + c_a a`, with the surrogate optics and
/// the bundled color matching functions.
pub fn paint_objective(c_l: f64, c_a: f64) -> Result<PaintObjective> {
    PaintObjective::new(c_l, c_a, Box::new(SurrogateOptics), CmfTable::bundled())
}

impl PaintObjective {
    pub fn new(c_l: f64, c_a: f64, optics: Box<dyn Optics>, cmf: CmfTable) -> Result<Self> {
        if (c_l + c_a - 1.0).abs() > 1e-12 {
            return domain(format!("color weights must sum to one, got {c_l} + {c_a}"));
        }
        let scale = cmf.normalization() * (LAMBDA_MAX - LAMBDA_MIN);
        Ok(Self {
            design_box: BoxDomain::new(
                vec![RADIUS_RANGE.0, THICKNESS_RANGE.0],
                vec![RADIUS_RANGE.1, THICKNESS_RANGE.1],
            )?,
            lambda: MeasureSpec::uniform(vec![LAMBDA_MIN], vec![LAMBDA_MAX])?,
            eta: MeasureSpec::truncated_normal(vec![0.0; 2], vec![RELATIVE_SD; 2], DEFAULT_TRUNCATION)?,
            cmf,
            optics,
            film: SaundersonParams::default(),
            white: WhitePoint::default(),
            c_l,
            c_a,
            scale,
        })
    }

    /// The paper's bright red, `c_L = 1/20`, `c_a = 19/20`.
    pub fn bright_red() -> Self {
        paint_objective(1.0 / 20.0, 19.0 / 20.0).expect("weights sum to one")
    }

    /// Replaces the particle-size perturbation, e.g. by a point mass at zero.
    pub fn with_perturbation(mut self, eta: MeasureSpec) -> Result<Self> {
        if eta.dim() != 2 {
            return domain("the perturbation measure is two-dimensional");
        }
        let s = eta.support();
        if s.lo().iter().chain(s.hi()).any(|v| v.abs() > 0.3) {
            return domain("perturbations beyond 30% leave the optics model box");
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn cmf(&self) -> &CmfTable {
        &self.cmf
    }

    /// Equal-spaced wavelengths and the tensor equal-mass rule on `eta`.
    pub fn rules(&self, n_lambda: usize, n_eta: usize) -> Result<(QuadratureRule, QuadratureRule)> {
        let lambda = uniform_grid(&IntervalDomain::new(LAMBDA_MIN, LAMBDA_MAX)?, n_lambda)?;
        Ok((lambda, self.eta.tensor_rule(n_eta)?))
    }

    /// Objective and gradient on a fixed `n_lambda x n_eta x n_eta` grid.
    pub fn discretized(&self, u: &[f64], n_lambda: usize, n_eta: usize) -> Result<(f64, Vec<f64>)> {
        let (outer, inner) = self.rules(n_lambda, n_eta)?;
        Ok(nested_quadrature(self, &outer, &inner, u))
    }

    /// Objective and gradient with `n_r` and `n_d` equal-mass nodes on the
    /// radius and thickness perturbations.
    pub fn discretized_grid(&self, u: &[f64], n_lambda: usize, n_r: usize, n_d: usize) -> Result<(f64, Vec<f64>)> {
        let lambda = uniform_grid(&IntervalDomain::new(LAMBDA_MIN, LAMBDA_MAX)?, n_lambda)?;
        let eta = QuadratureRule::tensor(&[self.eta.marginal_rule(0, n_r)?, self.eta.marginal_rule(1, n_d)?]);
        Ok(nested_quadrature(self, &lambda, &eta, u))
    }

    /// Objective and gradient on the reference grid.
    pub fn reference(&self, u: &[f64]) -> (f64, Vec<f64>) {
        self.discretized(u, REFERENCE_GRID.0, REFERENCE_GRID.1).expect("reference grid is valid")
    }

    /// Film color on a fixed grid.
    pub fn color(&self, u: &[f64], n_lambda: usize, n_eta: usize) -> Result<([f64; 3], Lab)> {
        let (outer, inner) = self.rules(n_lambda, n_eta)?;
        let mut xyz = [0.0; 3];
        let (mut v2, mut j2, mut v1) = ([0.0; 2], [0.0; 4], [0.0; 3]);
        let (mut j1u, mut j1v) = ([0.0; 6], [0.0; 6]);
        for (x1, b) in outer.iter() {
            let mut ks = [0.0; 2];
            for (x2, a) in inner.iter() {
                self.inner(u, x1, x2, &mut v2, &mut j2);
                ks[0] += a * v2[0];
                ks[1] += a * v2[1];
            }
            self.outer(u, x1, &ks, &mut v1, &mut j1u, &mut j1v);
            for i in 0..3 {
                xyz[i] += b * v1[i];
            }
        }
        Ok((xyz, lab_from_xyz(xyz, self.white).0))
    }
}

impl NestedObjective for PaintObjective {
    fn design_box(&self) -> &BoxDomain {
        &self.design_box
    }

    fn outer_measure(&self) -> &MeasureSpec {
        &self.lambda
    }

    fn inner_measure(&self) -> &MeasureSpec {
        &self.eta
    }

    fn inner_outputs(&self) -> usize {
        2
    }

    fn outer_outputs(&self) -> usize {
        3
    }

    fn inner(&self, u: &[f64], x1: &[f64], x2: &[f64], value: &mut [f64], jac: &mut [f64]) {
        let scale = [1.0 + x2[0], 1.0 + x2[1]];
        let r = (u[0] * scale[0]).clamp(EVAL_RADIUS.0, EVAL_RADIUS.1);
        let d = (u[1] * scale[1]).clamp(EVAL_THICKNESS.0, EVAL_THICKNESS.1);
        let o = self.optics.sample(r, d, x1[0]).expect("perturbed particle clamped into the model box");
        let (ks, dks) = o.ks();
        value[..2].copy_from_slice(&ks);
        for row in 0..2 {
            for col in 0..2 {
                jac[row * 2 + col] = dks[row][col] * scale[col];
            }
        }
    }

    fn outer(&self, _u: &[f64], x1: &[f64], v: &[f64], value: &mut [f64], jac_u: &mut [f64], jac_v: &mut [f64]) {
        let (r, dr_dk, dr_ds) = km_reflectance(v[0].max(0.0), v[1]).expect("averaged scattering is positive");
        let (c, dc) = saunderson(r, self.film);
        let cmf = self.cmf.at(x1[0]);
        for i in 0..3 {
            let w = self.scale * cmf[i];
            value[i] = w * c;
            jac_u[i * 2] = 0.0;
            jac_u[i * 2 + 1] = 0.0;
            jac_v[i * 2] = w * dc * dr_dk;
            jac_v[i * 2 + 1] = w * dc * dr_ds;
        }
    }

    fn transform(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let (lab, jac) = lab_from_xyz([w[0], w[1], w[2]], self.white);
        for (c, g) in grad.iter_mut().enumerate().take(3) {
            *g = -(self.c_l * jac[0][c] + self.c_a * jac[1][c]);
        }
        -(self.c_l * lab.l + self.c_a * lab.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{rng_stream, BoxDomain};

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-12)
    }

    #[test]
    fn chain_gradient_matches_differences() {
        let p = PaintObjective::bright_red();
        let mut rng = rng_stream(11, 0);
        let b = BoxDomain::new(vec![2.0, 2.0], vec![74.0, 249.0]).unwrap();
        let mut designs = vec![vec![38.0, 125.0]];
        designs.extend((0..4).map(|_| b.sample(&mut rng)));
        for u in designs {
            let (_, g) = p.discretized(&u, 30, 6).unwrap();
            for c in 0..2 {
                let h = 1e-6 * u[c];
                let mut up = u.clone();
                let mut um = u.clone();
                up[c] += h;
                um[c] -= h;
                let fd = (p.discretized(&up, 30, 6).unwrap().0 - p.discretized(&um, 30, 6).unwrap().0) / (2.0 * h);
                assert!(
                    relative_error(g[c], fd) < 1e-5 || (g[c] - fd).abs() < 1e-9,
                    "design {u:?} coordinate {c}: {} vs {fd}",
                    g[c]
                );
            }
        }
    }

    #[test]
    fn point_mass_perturbation_is_the_plain_pipeline() {
        let p = PaintObjective::bright_red().with_perturbation(MeasureSpec::point_mass(vec![0.0, 0.0]).unwrap()).unwrap();
        let u = [20.0, 80.0];
        let (xyz, _) = p.color(&u, 60, 1).unwrap();
        let mut direct = [0.0; 3];
        let (outer, _) = p.rules(60, 1).unwrap();
        for (x, w) in outer.iter() {
            let o = crate::color::surrogate_optics(u[0], u[1], x[0]).unwrap();
            let (ks, _) = o.ks();
            let r = km_reflectance(ks[0], ks[1]).unwrap().0;
            let c = saunderson(r, SaundersonParams::default()).0;
            let cmf = p.cmf().at(x[0]);
            for i in 0..3 {
                direct[i] += w * p.scale * cmf[i] * c;
            }
        }
        for i in 0..3 {
            assert!((xyz[i] - direct[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(paint_objective(0.5, 0.6).is_err());
        assert!(PaintObjective::bright_red().with_perturbation(MeasureSpec::point_mass(vec![0.0]).unwrap()).is_err());
    }
}
