use std::path::Path;

use crate::error::{CsgError, Result};

const BUNDLED: &str = include_str!("../../data/cie1931_2deg_5nm.csv");

/// Visible range covered by the table, in nm.
pub const LAMBDA_MIN: f64 = 400.0;
pub const LAMBDA_MAX: f64 = 700.0;
pub const CMF_ROWS: usize = 61;

/// Color matching functions `(xbar, ybar, zbar)` sampled every 5 nm from 400
/// to 700 nm, linearly interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct CmfTable {
    wavelengths: Vec<f64>,
    values: Vec<[f64; 3]>,
}

impl CmfTable {
    /// CIE 1931 2-degree standard observer.
    pub fn bundled() -> Self {
        parse_cmf(BUNDLED).expect("bundled table is valid")
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// Interpolated `(xbar, ybar, zbar)` at `lambda`, clamped to the table range.
    pub fn at(&self, lambda: f64) -> [f64; 3] {
        let w = &self.wavelengths;
        let last = w.len() - 1;
        if lambda <= w[0] {
            return self.values[0];
        }
        if lambda >= w[last] {
            return self.values[last];
        }
        let i = w.partition_point(|&v| v <= lambda) - 1;
        let t = (lambda - w[i]) / (w[i + 1] - w[i]);
        let (a, b) = (self.values[i], self.values[i + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
    }

    /// Exact integral of the interpolated functions over the table range.
    pub fn integrals(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for i in 1..self.len() {
            let h = self.wavelengths[i] - self.wavelengths[i - 1];
            for (c, si) in s.iter_mut().enumerate() {
                *si += 0.5 * h * (self.values[i - 1][c] + self.values[i][c]);
            }
        }
        s
    }

    /// `k = 100 / integral ybar`, so a perfect reflector has `Y = 100`.
    pub fn normalization(&self) -> f64 {
        100.0 / self.integrals()[1]
    }
}

pub fn load_cmf(path: impl AsRef<Path>) -> Result<CmfTable> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| CsgError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_cmf(&text)
}

/// Parses the CSV format `wavelength_nm,xbar,ybar,zbar`. Row numbers in
/// errors count data rows from 1; the header may be omitted.
pub fn parse_cmf(text: &str) -> Result<CmfTable> {
    let err = |row: usize, message: String| CsgError::Parse { row, message };
    let mut wavelengths = Vec::with_capacity(CMF_ROWS);
    let mut values = Vec::with_capacity(CMF_ROWS);
    let mut row = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("wavelength") {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(row, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| err(row, format!("'{f}' is not a number")))?;
        }
        if v[1..].iter().any(|&c| !(c >= 0.0)) {
            return Err(err(row, "color matching values must be nonnegative".into()));
        }
        if let Some(&prev) = wavelengths.last() {
            if !(v[0] > prev) {
                return Err(err(row, format!("wavelength {} does not increase", v[0])));
            }
        }
        wavelengths.push(v[0]);
        values.push([v[1], v[2], v[3]]);
    }
    if wavelengths.len() != CMF_ROWS {
        return Err(err(row, format!("expected {CMF_ROWS} rows, found {}", wavelengths.len())));
    }
    Ok(CmfTable { wavelengths, values })
}

/// Tristimulus values of a spectrum given as weighted wavelength samples.
///
/// The weights approximate the uniform measure on the visible range and sum
/// to one, hence the factor `|Lambda|`.
pub fn xyz_from_spectrum(samples: &[(f64, f64, f64)], cmf: &CmfTable) -> [f64; 3] {
    let scale = cmf.normalization() * (LAMBDA_MAX - LAMBDA_MIN);
    let mut xyz = [0.0; 3];
    for &(lambda, weight, reflectance) in samples {
        let c = cmf.at(lambda);
        for i in 0..3 {
            xyz[i] += weight * c[i] * reflectance;
        }
    }
    xyz.map(|v| scale * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{uniform_grid, IntervalDomain};

    fn flat(level: f64, n: usize) -> Vec<(f64, f64, f64)> {
        let rule = uniform_grid(&IntervalDomain::new(LAMBDA_MIN, LAMBDA_MAX).unwrap(), n).unwrap();
        rule.iter().map(|(x, w)| (x[0], w, level)).collect()
    }

    #[test]
    fn bundled_table() {
        let t = CmfTable::bundled();
        assert_eq!(t.len(), 61);
        assert_eq!(t.wavelengths()[0], 400.0);
        assert_eq!(t.wavelengths()[60], 700.0);
        assert_eq!(t.at(402.5)[1], 0.5 * (0.000396 + 0.00064));
    }

    #[test]
    fn normalization() {
        let t = CmfTable::bundled();
        // midpoints of whole 5 nm segments integrate the interpolant exactly
        for n in [60, 300] {
            assert!((xyz_from_spectrum(&flat(1.0, n), &t)[1] - 100.0).abs() < 1e-10);
            assert!((xyz_from_spectrum(&flat(0.5, n), &t)[1] - 50.0).abs() < 1e-10);
        }
        assert_eq!(xyz_from_spectrum(&flat(0.0, 60), &t), [0.0; 3]);
    }

    #[test]
    fn parse_errors_carry_rows() {
        let short: String = BUNDLED.lines().take(61).collect::<Vec<_>>().join("\n");
        assert!(matches!(parse_cmf(&short), Err(CsgError::Parse { row: 60, .. })));
        let negative = BUNDLED.replacen("400,0.014310000000", "400,-0.01431", 1);
        assert!(matches!(parse_cmf(&negative), Err(CsgError::Parse { row: 1, .. })));
        let swapped = BUNDLED.replacen("405,", "395,", 1);
        assert!(matches!(parse_cmf(&swapped), Err(CsgError::Parse { row: 2, .. })));
        let garbage = BUNDLED.replacen("410,", "4x0,", 1);
        assert!(matches!(parse_cmf(&garbage), Err(CsgError::Parse { row: 3, .. })));
        assert!(matches!(load_cmf("/nonexistent/cmf.csv"), Err(CsgError::Io(_))));
    }
}
