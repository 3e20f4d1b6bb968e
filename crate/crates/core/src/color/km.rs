use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const A: f64 = 8.0 / 3.0;
const B: f64 = 16.0 / 3.0;

/// Infinite-film reflectance `R = 1 + a q - sqrt(a^2 q^2 + b q)` with
/// `q = K/S`, `a = 8/3`, `b = 16/3`, and its partials in `K` and `S`.
///
/// Evaluated as `1 / (1 + a q + sqrt(a^2 q^2 + b q))`, which is the same
/// number (because `2a = b`) without the cancellation at large `q`.
pub fn km_reflectance(k: f64, s: f64) -> Result<(f64, f64, f64)> {
    if !(s > 0.0) {
        return domain(format!("scattering must be positive, got {s}"));
    }
    if !(k >= 0.0) {
        return domain(format!("absorption must be nonnegative, got {k}"));
    }
    let q = k / s;
    let root = (A * A * q * q + B * q).sqrt();
    let r = 1.0 / (1.0 + A * q + root);
    let dr_dq = if root > 0.0 { -r * r * (A + (2.0 * A * A * q + B) / (2.0 * root)) } else { f64::NEG_INFINITY };
    Ok((r, dr_dq / s, -dr_dq * q / s))
}

/// Surface-reflection constants of the film.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaundersonParams {
    pub rho0: f64,
    pub rho1: f64,
}

impl Default for SaundersonParams {
    fn default() -> Self {
        Self { rho0: 0.04, rho1: 0.6 }
    }
}

/// `((1 - rho0 - rho1) R + rho0) / (1 - rho1 R)` and its derivative in `R`.
pub fn saunderson(r: f64, p: SaundersonParams) -> (f64, f64) {
    let c = 1.0 - p.rho0 - p.rho1;
    let den = 1.0 - p.rho1 * r;
    ((c * r + p.rho0) / den, (c + p.rho1 * p.rho0) / (den * den))
}
