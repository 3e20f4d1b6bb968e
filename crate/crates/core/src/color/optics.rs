use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Particle radius and shell thickness bounds of the design, in nm.
pub const RADIUS_RANGE: (f64, f64) = (1.0, 75.0);
pub const THICKNESS_RANGE: (f64, f64) = (1.0, 250.0);

/// Region on which the optics are evaluated. Perturbed particles
/// `R (1 + eta)` with `|eta| <= 0.3` stay inside it.
pub const EVAL_RADIUS: (f64, f64) = (0.7, 97.5);
pub const EVAL_THICKNESS: (f64, f64) = (0.7, 325.0);

/// Optical efficiencies of one particle at one wavelength, with partials in
/// radius and thickness.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpticsSample {
    pub abs: f64,
    pub sca: f64,
    pub geo: f64,
    pub d_abs: [f64; 2],
    pub d_sca: [f64; 2],
    pub d_geo: [f64; 2],
}

impl OpticsSample {
    /// `(K, S) = (Abs, Sca (1 - Geo))` and their partials.
    pub fn ks(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let s = self.sca * (1.0 - self.geo);
        let ds = [0, 1].map(|i| self.d_sca[i] * (1.0 - self.geo) - self.sca * self.d_geo[i]);
        ([self.abs, s], [self.d_abs, ds])
    }
}

/// Source of particle optics. A Mie or DDA solver would implement this.
pub trait Optics: Send + Sync {
    fn sample(&self, radius: f64, thickness: f64, lambda: f64) -> Result<OpticsSample>;
}

/// Closed-form stand-in for a scattering solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateOptics;

impl Optics for SurrogateOptics {
    fn sample(&self, radius: f64, thickness: f64, lambda: f64) -> Result<OpticsSample> {
        surrogate_optics(radius, thickness, lambda)
    }
}

/// Smooth model with an absorption peak drifting with size, an oscillating
/// scattering term and a size-dependent geometry factor.
pub fn surrogate_optics(radius: f64, thickness: f64, lambda: f64) -> Result<OpticsSample> {
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    if !inside(radius, EVAL_RADIUS) || !inside(thickness, EVAL_THICKNESS) || !inside(lambda, (400.0, 700.0)) {
        return domain(format!("optics evaluated outside the model box at ({radius}, {thickness}, {lambda})"));
    }
    Ok(surrogate_unchecked(radius, thickness, lambda))
}

pub(crate) fn surrogate_unchecked(radius: f64, thickness: f64, lambda: f64) -> OpticsSample {
    const DT: f64 = 1.0 / 74.0;
    const DS: f64 = 1.0 / 249.0;
    let t = (radius - 1.0) * DT;
    let s = (thickness - 1.0) * DS;
    let w = (lambda - 400.0) / 300.0;

    let amp = 0.3 + 0.7 * s;
    let z = (w - (0.25 + 0.4 * s + 0.15 * t)) / 0.18;
    let e = (-z * z).exp();
    let abs = 0.05 + amp * e;
    let dz = 2.0 * z * amp * e / 0.18;
    let d_abs = [dz * 0.15 * DT, (0.7 * e + dz * 0.4) * DS];

    let b = 0.2 + 0.8 * t;
    let phase = 2.0 * PI * (w + 0.8 * s + 0.3 * t);
    let osc = 0.55 + 0.45 * phase.sin();
    let dosc = 0.45 * phase.cos() * 2.0 * PI;
    let sca = 0.1 + b * osc;
    let d_sca = [(0.8 * osc + b * dosc * 0.3) * DT, b * dosc * 0.8 * DS];

    let sigma = s + t;
    let tilt = 0.4 + 0.3 * w;
    let geo = 0.85 * sigma / (sigma + 0.5) * tilt;
    let dg = 0.85 * tilt * 0.5 / ((sigma + 0.5) * (sigma + 0.5));
    let d_geo = [dg * DT, dg * DS];

    OpticsSample { abs, sca, geo, d_abs, d_sca, d_geo }
}
