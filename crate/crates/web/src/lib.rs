//! Browser bindings: film color of a paint design, nearest-neighbor cells
//! in the unit square, and a CSG trace of the paint optimization.

use wasm_bindgen::prelude::*;

use csg::bench::paint_csg_config;
use csg::color::PaintObjective;
use csg::composite::{NestedObjective, NestedSolver};
use csg::neighbors::BlockNorm;
use csg::weights::Cells;

/// Nodes of the wavelength and perturbation grids used for displayed colors.
const COLOR_GRID: (usize, usize) = (100, 24);

fn error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn srgb_channel(linear: f64) -> f64 {
    let c = linear.clamp(0.0, 1.0);
    let v = if c <= 0.0031308 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 };
    (255.0 * v).round()
}

/// 8-bit sRGB of tristimulus values on the scale where white has `Y = 100`.
pub fn srgb_from_xyz(xyz: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = xyz.map(|v| v / 100.0);
    [
        srgb_channel(3.2404542 * x - 1.5371385 * y - 0.4985314 * z),
        srgb_channel(-0.9692660 * x + 1.8760108 * y + 0.0415560 * z),
        srgb_channel(0.0556434 * x - 0.2040259 * y + 1.0572252 * z),
    ]
}

/// `[objective, L, a, b, red, green, blue]` for pigment radius and film
/// thickness in nanometres.
pub fn film_color(radius: f64, thickness: f64) -> Result<Vec<f64>, csg::CsgError> {
    let paint = PaintObjective::bright_red();
    let u = [radius, thickness];
    if !paint.design_box().contains(&u) {
        return Err(csg::CsgError::Domain(format!("design ({radius}, {thickness}) lies outside the box")));
    }
    let (objective, _) = paint.discretized(&u, COLOR_GRID.0, COLOR_GRID.1)?;
    let (xyz, lab) = paint.color(&u, COLOR_GRID.0, COLOR_GRID.1)?;
    let rgb = srgb_from_xyz(xyz);
    Ok(vec![objective, lab.l, lab.a, lab.b, rgb[0], rgb[1], rgb[2]])
}

/// Owner of every pixel center of a `resolution` square grid on the unit
/// square, rows from the top. Record `k` sits at `points[2k..2k+2]` and its
/// distance to any point is raised by `offsets[k]`.
pub fn owners(points: &[f64], offsets: &[f64], resolution: usize) -> Result<Vec<u32>, csg::CsgError> {
    if points.len() != 2 * offsets.len() || offsets.is_empty() {
        return Err(csg::CsgError::Domain("need one offset per point and at least one point".into()));
    }
    let h = 1.0 / resolution as f64;
    let queries: Vec<f64> = (0..resolution)
        .flat_map(|i| (0..resolution).flat_map(move |j| [(j as f64 + 0.5) * h, 1.0 - (i as f64 + 0.5) * h]))
        .collect();
    let cells = Cells::new(BlockNorm::single(2, 1.0), points, offsets.to_vec(), None);
    Ok(cells.assign(&queries, false).into_iter().map(|k| k as u32).collect())
}

/// Share of the pixels owned by each record.
pub fn shares(owners: &[u32], records: usize) -> Vec<f64> {
    let mut w = vec![0.0; records];
    for &k in owners {
        w[k as usize] += 1.0;
    }
    let total = owners.len().max(1) as f64;
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// `[radius, thickness, objective estimate]` per iteration of CSG on the
/// paint problem.
pub fn paint_trace(radius: f64, thickness: f64, iterations: usize, seed: u64) -> Result<Vec<f64>, csg::CsgError> {
    let paint = PaintObjective::bright_red();
    let mut config = paint_csg_config(vec![radius, thickness], iterations, seed, 0);
    let mut start = vec![radius, thickness];
    paint.design_box().clamp_in_place(&mut start);
    config.start = Some(start);
    let mut solver = NestedSolver::new(&paint, config)?;
    let mut out = Vec::with_capacity(3 * iterations);
    while !solver.is_done() {
        let step = solver.step()?;
        out.extend([step.design[0], step.design[1], step.objective]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn paint_color(radius: f64, thickness: f64) -> Result<Vec<f64>, JsError> {
    film_color(radius, thickness).map_err(error)
}

#[wasm_bindgen]
pub fn voronoi_owners(points: &[f64], offsets: &[f64], resolution: usize) -> Result<Vec<u32>, JsError> {
    owners(points, offsets, resolution).map_err(error)
}

#[wasm_bindgen]
pub fn voronoi_weights(points: &[f64], offsets: &[f64], resolution: usize) -> Result<Vec<f64>, JsError> {
    owners(points, offsets, resolution).map(|o| shares(&o, offsets.len())).map_err(error)
}

#[wasm_bindgen]
pub fn csg_trace(radius: f64, thickness: f64, iterations: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    paint_trace(radius, thickness, iterations, seed as u64).map_err(error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_is_white() {
        assert_eq!(srgb_from_xyz([95.047, 100.0, 108.883]), [255.0, 255.0, 255.0]);
        assert_eq!(srgb_from_xyz([0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn optimized_film_is_red() {
        let c = film_color(75.0, 14.24).unwrap();
        assert!(c[0] < 0.0);
        assert!(c[4] > c[5] && c[4] > c[6], "{c:?}");
        assert!(film_color(500.0, 10.0).is_err());
    }

    #[test]
    fn offsets_shrink_cells() {
        let p = [0.25, 0.5, 0.75, 0.5];
        let even = shares(&owners(&p, &[0.0, 0.0], 40).unwrap(), 2);
        assert_eq!(even, vec![0.5, 0.5]);
        let skew = shares(&owners(&p, &[0.0, 0.1], 40).unwrap(), 2);
        assert!((skew[0] - 0.57375).abs() < 1e-12 && (skew.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(owners(&p, &[0.0], 10).is_err());
    }

    #[test]
    fn trace_stays_in_box() {
        let t = paint_trace(30.0, 100.0, 50, 1).unwrap();
        assert_eq!(t.len(), 150);
        let paint = PaintObjective::bright_red();
        assert!(t.chunks(3).all(|s| paint.design_box().contains(&s[..2])));
        assert_eq!(t, paint_trace(30.0, 100.0, 50, 1).unwrap());
    }
}
