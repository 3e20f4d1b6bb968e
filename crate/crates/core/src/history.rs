use crate::error::{domain, Result};
use crate::neighbors::SortedPositions;

/// Borrowed view of one stored sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord<'a> {
    /// 1-based insertion position.
    pub index: usize,
    pub design: &'a [f64],
    pub point: &'a [f64],
    pub value: Option<&'a [f64]>,
    /// Design-Jacobian, `outputs x grad_dim`, row-major.
    pub jacobian: &'a [f64],
}

/// Append-only log of integrand samples `(u_k, x_k, j(u_k, x_k), grad_1 j(u_k, x_k))`.
///
/// Storage is columnar so the weight computations can scan designs and points
/// without chasing pointers. Integrands may be vector valued; the scalar case
/// is `outputs == 1`, where the Jacobian is the gradient.
#[derive(Clone, Debug)]
pub struct History {
    design_dim: usize,
    point_dim: usize,
    outputs: usize,
    grad_dim: usize,
    store_values: bool,
    designs: Vec<f64>,
    points: Vec<f64>,
    values: Vec<f64>,
    jacobians: Vec<f64>,
    sorted: Option<SortedPositions>,
    cap: Option<usize>,
}

impl History {
    pub fn new(design_dim: usize, point_dim: usize, outputs: usize) -> Self {
        Self {
            design_dim,
            point_dim,
            outputs,
            grad_dim: design_dim,
            store_values: true,
            designs: Vec::new(),
            points: Vec::new(),
            values: Vec::new(),
            jacobians: Vec::new(),
            sorted: (point_dim == 1).then(SortedPositions::new),
            cap: None,
        }
    }

    /// History that keeps gradients only; objective estimates are unavailable.
    pub fn gradients_only(design_dim: usize, point_dim: usize, outputs: usize) -> Self {
        Self { store_values: false, ..Self::new(design_dim, point_dim, outputs) }
    }

    /// History whose stored "design" is a query context of which only the
    /// first `grad_dim` coordinates are differentiated, e.g. `(u, x1)` with
    /// gradients in `u` only.
    pub fn with_context(context_dim: usize, grad_dim: usize, point_dim: usize, outputs: usize) -> Self {
        Self { grad_dim: grad_dim.min(context_dim), ..Self::new(context_dim, point_dim, outputs) }
    }

    /// Evicts the oldest record once `max` records are stored. Off by default;
    /// with a cap, record indices refer to the current contents.
    pub fn with_cap(mut self, max: usize) -> Self {
        self.cap = Some(max.max(1));
        self
    }

    pub fn design_dim(&self) -> usize {
        self.design_dim
    }

    pub fn point_dim(&self) -> usize {
        self.point_dim
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Columns of the stored Jacobians.
    pub fn grad_dim(&self) -> usize {
        self.grad_dim
    }

    pub fn len(&self) -> usize {
        self.designs.len() / self.design_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn has_values(&self) -> bool {
        self.store_values
    }

    pub fn push(&mut self, design: &[f64], point: &[f64], value: Option<&[f64]>, jacobian: &[f64]) -> Result<usize> {
        if design.len() != self.design_dim || point.len() != self.point_dim {
            return domain(format!(
                "record of shape ({}, {}) does not fit history of shape ({}, {})",
                design.len(),
                point.len(),
                self.design_dim,
                self.point_dim
            ));
        }
        if jacobian.len() != self.outputs * self.grad_dim {
            return domain(format!(
                "jacobian has {} entries, expected {}",
                jacobian.len(),
                self.outputs * self.grad_dim
            ));
        }
        if self.store_values {
            match value {
                Some(v) if v.len() == self.outputs => self.values.extend_from_slice(v),
                Some(v) => return domain(format!("value has {} entries, expected {}", v.len(), self.outputs)),
                None => return domain("this history stores integrand values"),
            }
        }
        if let Some(cap) = self.cap {
            if self.len() == cap {
                self.evict_oldest();
            }
        }
        let k = self.len();
        self.designs.extend_from_slice(design);
        self.points.extend_from_slice(point);
        self.jacobians.extend_from_slice(jacobian);
        if let Some(sorted) = self.sorted.as_mut() {
            sorted.insert(&self.points, k, point[0]);
        }
        Ok(k + 1)
    }

    fn evict_oldest(&mut self) {
        self.designs.drain(..self.design_dim);
        self.points.drain(..self.point_dim);
        self.jacobians.drain(..self.outputs * self.grad_dim);
        if self.store_values {
            self.values.drain(..self.outputs);
        }
        if self.sorted.is_some() {
            let mut fresh = SortedPositions::new();
            for k in 0..self.len() {
                fresh.insert(&self.points, k, self.points[k]);
            }
            self.sorted = Some(fresh);
        }
    }

    /// Record at 0-based position `k`.
    pub fn record(&self, k: usize) -> SampleRecord<'_> {
        SampleRecord {
            index: k + 1,
            design: self.design(k),
            point: self.point(k),
            value: self.store_values.then(|| &self.values[k * self.outputs..(k + 1) * self.outputs]),
            jacobian: self.jacobian(k),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = SampleRecord<'_>> + '_ {
        (0..self.len()).map(move |k| self.record(k))
    }

    pub fn design(&self, k: usize) -> &[f64] {
        &self.designs[k * self.design_dim..(k + 1) * self.design_dim]
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.point_dim..(k + 1) * self.point_dim]
    }

    pub fn jacobian(&self, k: usize) -> &[f64] {
        let w = self.outputs * self.grad_dim;
        &self.jacobians[k * w..(k + 1) * w]
    }

    pub fn designs(&self) -> &[f64] {
        &self.designs
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.store_values.then_some(&self.values[..])
    }

    pub fn jacobians(&self) -> &[f64] {
        &self.jacobians
    }

    /// Records sorted by position, available for one-dimensional points.
    pub fn sorted_order(&self) -> Option<&[usize]> {
        self.sorted.as_ref().map(|s| s.order())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_view() {
        let mut h = History::new(2, 1, 1);
        assert_eq!(h.push(&[1.0, 2.0], &[0.3], Some(&[5.0]), &[0.1, 0.2]).unwrap(), 1);
        assert_eq!(h.push(&[1.0, 2.0], &[-0.3], Some(&[6.0]), &[0.3, 0.4]).unwrap(), 2);
        let r = h.record(1);
        assert_eq!(r.index, 2);
        assert_eq!(r.point, &[-0.3]);
        assert_eq!(r.value, Some(&[6.0][..]));
        assert_eq!(r.jacobian, &[0.3, 0.4]);
        assert_eq!(h.sorted_order().unwrap(), &[1, 0]);
        assert!(h.push(&[1.0], &[0.0], Some(&[0.0]), &[0.0]).is_err());
        assert!(h.push(&[1.0, 2.0], &[0.0], None, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cap_evicts_oldest() {
        let mut h = History::new(1, 1, 1).with_cap(2);
        for k in 0..4 {
            let x = k as f64;
            h.push(&[x], &[-x], Some(&[x]), &[x]).unwrap();
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.design(0), &[2.0]);
        assert_eq!(h.sorted_order().unwrap(), &[1, 0]);
    }
}
