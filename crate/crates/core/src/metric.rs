use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// One block of a product metric: a Euclidean norm on `dim` consecutive
/// coordinates, scaled by `coefficient`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub name: String,
    pub dim: usize,
    pub coefficient: f64,
}

impl MetricBlock {
    pub fn new(name: impl Into<String>, dim: usize, coefficient: f64) -> Self {
        Self { name: name.into(), dim, coefficient }
    }
}

/// Weighted sum of per-block Euclidean norms, `sum_b c_b * |p_b - q_b|`.
///
/// This is the geometry of all nearest-neighbor computations: the leading
/// blocks cover the design, the trailing ones the random variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMetric {
    blocks: Vec<MetricBlock>,
}

impl ProductMetric {
    pub fn new(blocks: Vec<MetricBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return domain("product metric needs at least one block");
        }
        for b in &blocks {
            if b.dim == 0 {
                return domain(format!("metric block '{}' has zero dimension", b.name));
            }
            if !(b.coefficient > 0.0) || !b.coefficient.is_finite() {
                return domain(format!("metric block '{}' needs a positive coefficient", b.name));
            }
        }
        Ok(Self { blocks })
    }

    /// Two-block metric `c_u |u| + c_x |x|` used by the single-level problems.
    pub fn design_point(design_dim: usize, point_dim: usize, c_u: f64, c_x: f64) -> Result<Self> {
        Self::new(vec![MetricBlock::new("u", design_dim, c_u), MetricBlock::new("x", point_dim, c_x)])
    }

    pub fn blocks(&self) -> &[MetricBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// Same geometry with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.blocks
                .iter()
                .map(|b| MetricBlock { coefficient: b.coefficient * factor, ..b.clone() })
                .collect(),
        )
    }

    /// Splits the metric into the blocks covering the first `leading` coordinates
    /// and the remainder. Fails if `leading` cuts through a block.
    pub fn split_at(&self, leading: usize) -> Result<(Vec<MetricBlock>, Vec<MetricBlock>)> {
        let mut acc = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            if acc == leading {
                return Ok((self.blocks[..i].to_vec(), self.blocks[i..].to_vec()));
            }
            acc += b.dim;
        }
        if acc == leading {
            return Ok((self.blocks.clone(), Vec::new()));
        }
        domain(format!("coordinate {leading} does not fall on a metric block boundary"))
    }

    pub fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        product_distance(self, p, q)
    }
}

/// Accumulates `c * |a - b|` for each block onto `base`, in block order.
#[inline]
pub fn accumulate_blocks(blocks: &[(usize, f64)], base: f64, a: &[f64], b: &[f64]) -> f64 {
    let mut total = base;
    let mut at = 0;
    for &(dim, c) in blocks {
        let mut ss = 0.0;
        for i in at..at + dim {
            let d = a[i] - b[i];
            ss += d * d;
        }
        total += c * ss.sqrt();
        at += dim;
    }
    total
}

pub fn product_distance(metric: &ProductMetric, p: &[f64], q: &[f64]) -> Result<f64> {
    let dim = metric.dim();
    if p.len() != dim || q.len() != dim {
        return domain(format!(
            "points of length {} and {} do not match metric dimension {dim}",
            p.len(),
            q.len()
        ));
    }
    let blocks: Vec<(usize, f64)> = metric.blocks.iter().map(|b| (b.dim, b.coefficient)).collect();
    Ok(accumulate_blocks(&blocks, 0.0, p, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_sums() {
        let m = ProductMetric::design_point(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(m.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 7.0);
        let m = ProductMetric::design_point(1, 1, 1.0, 100.0).unwrap();
        assert_eq!(m.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 403.0);
        let m = ProductMetric::design_point(2, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.distance(&[0.0, 0.0, 0.0], &[3.0, 4.0, -1.0]).unwrap(), 6.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ProductMetric::design_point(1, 1, 0.0, 1.0).is_err());
        assert!(ProductMetric::design_point(0, 1, 1.0, 1.0).is_err());
        let m = ProductMetric::design_point(1, 1, 1.0, 1.0).unwrap();
        assert!(m.distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn split_on_block_boundaries() {
        let m = ProductMetric::new(vec![
            MetricBlock::new("u", 2, 1.0),
            MetricBlock::new("lambda", 1, 0.01),
            MetricBlock::new("eta", 2, 1.0),
        ])
        .unwrap();
        let (a, b) = m.split_at(3).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 1);
        assert!(m.split_at(1).is_err());
        assert_eq!(m.split_at(5).unwrap().1.len(), 0);
    }
}
