//! Test problems with closed-form references.

use crate::composite::SumOfIntegrals;
use crate::csg::Problem;
use crate::error::{domain, Result};
use crate::measures::{BoxDomain, MeasureSpec};

/// Half-width of the design box of both test problems.
pub const DESIGN_HALF_WIDTH: f64 = 5.0;

/// `min 1/2 integral |u - x|^2 dx` over `x` uniform on `(-1/2, 1/2)^d`, `u` in `[-5, 5]^d`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    design_box: BoxDomain,
    measure: MeasureSpec,
}

pub fn quadratic_problem(dim: usize) -> Result<Quadratic> {
    if dim == 0 {
        return domain("the quadratic problem needs at least one dimension");
    }
    Ok(Quadratic {
        design_box: BoxDomain::cube(dim, -DESIGN_HALF_WIDTH, DESIGN_HALF_WIDTH)?,
        measure: MeasureSpec::uniform(vec![-0.5; dim], vec![0.5; dim])?,
    })
}

impl Quadratic {
    pub fn dim(&self) -> usize {
        self.design_box.dim()
    }

    /// The same objective as a sum of independent integrals, one per group of
    /// coordinates: `sum_g 1/2 integral |u_g - x_g|^2 dx_g`.
    pub fn split(&self, groups: Vec<Vec<usize>>) -> Result<SumOfIntegrals> {
        let measures = groups
            .iter()
            .map(|g| MeasureSpec::uniform(vec![-0.5; g.len()], vec![0.5; g.len()]))
            .collect::<Result<Vec<_>>>()?;
        let integrand = |_: usize, coords: &[usize], u: &[f64], x: &[f64], grad: &mut [f64]| {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut v = 0.0;
            for (&i, &xi) in coords.iter().zip(x) {
                grad[i] = u[i] - xi;
                v += 0.5 * grad[i] * grad[i];
            }
            v
        };
        Ok(SumOfIntegrals::new(self.design_box.clone(), self.dim(), groups, measures, Box::new(integrand))?
            .with_exact_gradient(Box::new(|u| u.to_vec()))
            .with_optimum(vec![0.0; self.dim()]))
    }
}

impl Problem for Quadratic {
    fn design_box(&self) -> &BoxDomain {
        &self.design_box
    }

    fn measure(&self, _part: usize) -> &MeasureSpec {
        &self.measure
    }

    fn integrand(&self, _part: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..u.len() {
            grad[i] = u[i] - x[i];
            v += 0.5 * grad[i] * grad[i];
        }
        v
    }

    fn exact_gradient(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }

    fn exact_objective(&self, u: &[f64]) -> Option<f64> {
        Some(0.5 * u.iter().map(|v| v * v).sum::<f64>() + self.dim() as f64 / 24.0)
    }

    fn optimum(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim()])
    }
}

/// `min 1/2 integral |u - x 1|^2 dx` with a scalar `x` uniform on `(-1/2, 1/2)`
/// and `u` in `[-5, 5]^d`: the random variable stays one-dimensional while the
/// design dimension grows.
#[derive(Clone, Debug)]
pub struct Anisotropic {
    design_box: BoxDomain,
    measure: MeasureSpec,
}

pub fn anisotropic_problem(design_dim: usize) -> Result<Anisotropic> {
    if design_dim == 0 {
        return domain("the anisotropic problem needs at least one design dimension");
    }
    Ok(Anisotropic {
        design_box: BoxDomain::cube(design_dim, -DESIGN_HALF_WIDTH, DESIGN_HALF_WIDTH)?,
        measure: MeasureSpec::uniform(vec![-0.5], vec![0.5])?,
    })
}

impl Problem for Anisotropic {
    fn design_box(&self) -> &BoxDomain {
        &self.design_box
    }

    fn measure(&self, _part: usize) -> &MeasureSpec {
        &self.measure
    }

    fn integrand(&self, _part: usize, u: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..u.len() {
            grad[i] = u[i] - x[0];
            v += 0.5 * grad[i] * grad[i];
        }
        v
    }

    fn exact_gradient(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }

    fn exact_objective(&self, u: &[f64]) -> Option<f64> {
        Some(0.5 * u.iter().map(|v| v * v).sum::<f64>() + u.len() as f64 / 24.0)
    }

    fn optimum(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.design_box.dim()])
    }
}

/// Parses a group specification for `dim` integration coordinates.
///
/// `""` or `"none"` keeps one group; `"5x2"` makes five groups of two
/// consecutive coordinates; `"0,1;2;3,4"` lists the groups explicitly.
pub fn parse_groups(spec: &str, dim: usize) -> Result<Vec<Vec<usize>>> {
    let spec = spec.trim();
    let groups = if spec.is_empty() || spec == "none" {
        vec![(0..dim).collect()]
    } else if let Some((count, size)) = spec.split_once('x') {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad_groups(spec));
        let (count, size) = (parse(count)?, parse(size)?);
        (0..count).map(|g| (g * size..(g + 1) * size).collect()).collect()
    } else {
        spec.split(';')
            .map(|g| g.split(',').map(|i| i.trim().parse::<usize>().map_err(|_| bad_groups(spec))).collect())
            .collect::<Result<Vec<Vec<usize>>>>()?
    };
    crate::composite::validate_groups(&groups, dim)?;
    Ok(groups)
}

fn bad_groups(spec: &str) -> crate::CsgError {
    crate::CsgError::Domain(format!("cannot parse groups '{spec}' (use 'none', 'AxB' or '0,1;2,3')"))
}
