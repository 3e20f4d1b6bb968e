use serde::{Deserialize, Serialize};

pub const EPSILON: f64 = 216.0 / 24389.0;
pub const KAPPA: f64 = 24389.0 / 27.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint(pub [f64; 3]);

impl Default for WhitePoint {
    fn default() -> Self {
        WhitePoint([94.72528492, 100.0, 107.13012997])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// `f(t)` and `f'(t)`: cube root above `EPSILON`, linear below.
pub fn lab_f(t: f64) -> (f64, f64) {
    if t > EPSILON {
        let c = t.cbrt();
        (c, 1.0 / (3.0 * c * c))
    } else {
        ((KAPPA * t + 16.0) / 116.0, KAPPA / 116.0)
    }
}

/// CIELAB coordinates and the Jacobian `d(L, a, b) / d(X, Y, Z)` (row-major).
pub fn lab_from_xyz(xyz: [f64; 3], white: WhitePoint) -> (Lab, [[f64; 3]; 3]) {
    let mut f = [0.0; 3];
    let mut df = [0.0; 3];
    for i in 0..3 {
        let (v, d) = lab_f(xyz[i] / white.0[i]);
        f[i] = v;
        df[i] = d / white.0[i];
    }
    let lab = Lab { l: 116.0 * f[1] - 16.0, a: 500.0 * (f[0] - f[1]), b: 200.0 * (f[1] - f[2]) };
    let jac = [
        [0.0, 116.0 * df[1], 0.0],
        [500.0 * df[0], -500.0 * df[1], 0.0],
        [0.0, 200.0 * df[1], -200.0 * df[2]],
    ];
    (lab, jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_maps_to_full_lightness() {
        let w = WhitePoint::default();
        let (lab, _) = lab_from_xyz(w.0, w);
        assert!((lab.l - 100.0).abs() < 1e-12 && lab.a.abs() < 1e-12 && lab.b.abs() < 1e-12);
    }

    #[test]
    fn branch_is_continuous() {
        let below = (KAPPA * EPSILON + 16.0) / 116.0;
        let above = EPSILON.cbrt();
        assert!((below - above).abs() < 1e-12);
        assert!((above - 6.0 / 29.0).abs() < 1e-12);
    }

    #[test]
    fn eighth_of_luminance() {
        let w = WhitePoint::default();
        let (lab, _) = lab_from_xyz([w.0[0], w.0[1] / 8.0, w.0[2]], w);
        assert!((lab.l - 42.0).abs() < 1e-9);
        assert!((lab.a - 250.0).abs() < 1e-9);
        assert!((lab.b + 100.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_differences() {
        let w = WhitePoint::default();
        for xyz in [[30.0, 20.0, 10.0], [0.3, 0.5, 0.2]] {
            let (_, jac) = lab_from_xyz(xyz, w);
            for c in 0..3 {
                let h = 1e-6 * xyz[c];
                let mut p = xyz;
                let mut m = xyz;
                p[c] += h;
                m[c] -= h;
                let (lp, _) = lab_from_xyz(p, w);
                let (lm, _) = lab_from_xyz(m, w);
                let fd = [(lp.l - lm.l) / (2.0 * h), (lp.a - lm.a) / (2.0 * h), (lp.b - lm.b) / (2.0 * h)];
                for r in 0..3 {
                    assert!((jac[r][c] - fd[r]).abs() <= 1e-6 * (1.0 + fd[r].abs()));
                }
            }
        }
    }
}
