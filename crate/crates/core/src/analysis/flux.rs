use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{VectorField, MAX_DIM};
use crate::grid::Grid;
use crate::levelset::{boundary_faces, untrusted_band, Mask};

use super::{pairwise_sum, quantile};

/// Axis-aligned square face `{x : x[axis] = lower[axis]}`, spanning
/// `[lower[k], lower[k] + edge]` along the other axes, with unit normal
/// `sign * e_axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFace {
    pub lower: Vec<f64>,
    pub axis: usize,
    pub edge: f64,
    pub sign: f64,
}

/// Per-face statistics for fluxes through a reachable-set boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceStats {
    pub faces: usize,
    pub trusted_faces: usize,
    /// Total staircase area of the trusted faces.
    pub staircase_area: f64,
    pub min_density: f64,
    pub p10_density: f64,
    pub p50_density: f64,
    pub p90_density: f64,
    /// Largest flow speed seen on a trusted face.
    pub max_speed: f64,
    /// Set when the flow is nowhere faster than the swimmer, so no boundary
    /// face can satisfy the bound and nothing is asserted.
    pub vacuous: bool,
    pub tolerance: f64,
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub surface: String,
    pub flux: f64,
    pub area: f64,
    pub density: f64,
    /// Quadrature points per unit length (cube faces only).
    pub quad_res: Option<f64>,
    pub faces: Option<FaceStats>,
}

/// Midpoint-rule flux of `field` through `face`, with `quad_res` points per
/// unit length along each face axis.
pub fn flux_cube_face(field: &VectorField, face: &CubeFace, quad_res: f64) -> Result<FluxReport> {
    let d = field.dim();
    if face.lower.len() != d || face.axis >= d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: face.lower.len(),
        });
    }
    if !(face.edge > 0.0) || !face.edge.is_finite() {
        return Err(Error::InvalidArgument(format!("face edge must be positive, got {}", face.edge)));
    }
    if face.sign.abs() != 1.0 {
        return Err(Error::InvalidArgument("face normal sign must be +1 or -1".into()));
    }
    if !(quad_res > 0.0) {
        return Err(Error::InvalidArgument(format!("quad_res must be positive, got {quad_res}")));
    }
    let m = (face.edge * quad_res).ceil().max(1.0) as usize;
    let step = face.edge / m as f64;
    let free: Vec<usize> = (0..d).filter(|&k| k != face.axis).collect();
    let count = m.pow(free.len() as u32);
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|mut i| {
            let mut x = [0.0; MAX_DIM];
            x[..d].copy_from_slice(&face.lower);
            for &k in &free {
                x[k] = face.lower[k] + ((i % m) as f64 + 0.5) * step;
                i /= m;
            }
            let mut v = [0.0; MAX_DIM];
            field.eval_into(&x[..d], &mut v[..d]);
            face.sign * v[face.axis]
        })
        .collect();
    let cell = step.powi(free.len() as i32);
    let area = face.edge.powi(free.len() as i32);
    let flux = pairwise_sum(&values) * cell;
    Ok(FluxReport {
        surface: format!("cube face axis {} edge {}", face.axis, face.edge),
        flux,
        area,
        density: flux / area,
        quad_res: Some(m as f64 / face.edge),
        faces: None,
    })
}

/// The `2d` faces of the cube `[lower, lower + edge]`, with outward normals.
pub fn cube_faces(lower: &[f64], edge: f64) -> Vec<CubeFace> {
    let d = lower.len();
    let mut faces = Vec::with_capacity(2 * d);
    for axis in 0..d {
        for sign in [-1.0, 1.0] {
            let mut l = lower.to_vec();
            if sign > 0.0 {
                l[axis] += edge;
            }
            faces.push(CubeFace {
                lower: l,
                axis,
                edge,
                sign,
            });
        }
    }
    faces
}

/// Net outward flux through the boundary of the cube `[lower, lower + edge]`.
pub fn closed_cube_flux(field: &VectorField, lower: &[f64], edge: f64, quad_res: f64) -> Result<FluxReport> {
    let reports = cube_faces(lower, edge)
        .iter()
        .map(|f| flux_cube_face(field, f, quad_res))
        .collect::<Result<Vec<_>>>()?;
    let fluxes: Vec<f64> = reports.iter().map(|r| r.flux).collect();
    let flux = pairwise_sum(&fluxes);
    let area = reports.iter().map(|r| r.area).sum::<f64>();
    Ok(FluxReport {
        surface: format!("closed cube edge {edge}"),
        flux,
        area,
        density: flux / area,
        quad_res: reports[0].quad_res,
        faces: None,
    })
}

/// Tolerance on the inward flux density of reachable-set boundaries.
pub const BOUNDARY_TOLERANCE: f64 = 0.3;

/// Width of the Gaussian used to estimate boundary normals, in grid spacings.
const NORMAL_SMOOTHING_CELLS: f64 = 4.0;

/// Inward flux of `field` through the boundary of `mask`.
///
/// Staircase faces all point along grid axes, which biases `V . n`. Each face
/// therefore uses the normal of a Gaussian-smoothed indicator of the mask and
/// counts with its area projected onto that normal, which makes the summed
/// area approximate the area of the smooth boundary. Faces within the
/// untrusted band along the box walls are left out.
pub fn boundary_flux_check(field: &VectorField, mask: &Mask) -> Result<FluxReport> {
    let grid = mask.grid();
    let d = grid.dim();
    if field.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: field.dim() });
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::DegenerateMask("all false"));
    }
    if count == grid.len() {
        return Err(Error::DegenerateMask("all true"));
    }
    let faces = boundary_faces(mask)?;
    let smooth = smoothed_indicator(mask, NORMAL_SMOOTHING_CELLS * grid.h());
    let band = untrusted_band(grid);
    let trusted: Vec<_> = faces
        .iter()
        .filter(|f| grid.trusted(f.inside, band) && grid.trusted(f.outside, band))
        .collect();
    // (density, projected area, speed) per trusted face.
    let per_face: Vec<(f64, f64, f64)> = trusted
        .par_iter()
        .map(|f| {
            let mut n = [0.0; MAX_DIM];
            let gi = gradient(&smooth, grid, f.inside);
            let go = gradient(&smooth, grid, f.outside);
            for k in 0..d {
                n[k] = 0.5 * (gi[k] + go[k]);
            }
            let len = n[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 0.0 {
                n[..d].iter_mut().for_each(|x| *x /= len);
            } else {
                n[..d].fill(0.0);
                n[f.axis] = f.sign;
            }
            let mut v = [0.0; MAX_DIM];
            field.eval_into(&f.center, &mut v[..d]);
            let density = (0..d).map(|k| v[k] * n[k]).sum::<f64>();
            let speed = v[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
            (density, f.area * n[f.axis].abs(), speed)
        })
        .collect();
    let weighted: Vec<f64> = per_face.iter().map(|(q, a, _)| q * a).collect();
    let areas: Vec<f64> = per_face.iter().map(|(_, a, _)| *a).collect();
    let flux = pairwise_sum(&weighted);
    let area = pairwise_sum(&areas);
    let mut densities: Vec<f64> = per_face.iter().map(|(q, _, _)| *q).collect();
    densities.sort_by(f64::total_cmp);
    let max_speed = per_face.iter().map(|p| p.2).fold(0.0, f64::max);
    let vacuous = max_speed <= 1.0;
    let q = |p| quantile(&densities, p).unwrap_or(f64::NAN);
    let p10 = q(0.1);
    let passed = (!vacuous && !densities.is_empty()).then(|| p10 >= 1.0 - BOUNDARY_TOLERANCE);
    Ok(FluxReport {
        surface: "reachable-set boundary".into(),
        flux,
        area,
        density: if area > 0.0 { flux / area } else { f64::NAN },
        quad_res: None,
        faces: Some(FaceStats {
            faces: faces.len(),
            trusted_faces: trusted.len(),
            staircase_area: trusted.iter().map(|f| f.area).sum(),
            min_density: q(0.0),
            p10_density: p10,
            p50_density: q(0.5),
            p90_density: q(0.9),
            max_speed,
            vacuous,
            tolerance: BOUNDARY_TOLERANCE,
            passed,
        }),
    })
}

/// Mask indicator convolved with a truncated Gaussian, axis by axis, with
/// values beyond the walls taken from the nearest node.
fn smoothed_indicator(mask: &Mask, sigma: f64) -> Vec<f64> {
    let grid = mask.grid();
    let h = grid.h();
    let reach = (3.0 * sigma / h).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|j| (-0.5 * (j as f64 * h / sigma).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|w| w / total).collect();
    let strides = grid.strides();
    let mut cur: Vec<f64> = mask.values().iter().map(|&b| b as u8 as f64).collect();
    for axis in 0..grid.dim() {
        let n = grid.nodes()[axis] as isize;
        let st = strides[axis];
        let src = cur;
        cur = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let i = ((idx / st) % n as usize) as isize;
                let base = idx - i as usize * st;
                kernel
                    .iter()
                    .zip(-reach..=reach)
                    .map(|(w, j)| w * src[base + (i + j).clamp(0, n - 1) as usize * st])
                    .sum()
            })
            .collect();
    }
    cur
}

fn gradient(values: &[f64], grid: &Grid, idx: usize) -> [f64; MAX_DIM] {
    let strides = grid.strides();
    let m = grid.multi_index(idx);
    let mut g = [0.0; MAX_DIM];
    for k in 0..grid.dim() {
        let st = strides[k];
        let (lo, hi) = (m[k] > 0, m[k] + 1 < grid.nodes()[k]);
        let a = if lo { values[idx - st] } else { values[idx] };
        let b = if hi { values[idx + st] } else { values[idx] };
        let span = (lo as u8 + hi as u8) as f64 * grid.h();
        g[k] = if span > 0.0 { (b - a) / span } else { 0.0 };
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn face(lower: &[f64], axis: usize, edge: f64) -> CubeFace {
        CubeFace {
            lower: lower.to_vec(),
            axis,
            edge,
            sign: 1.0,
        }
    }

    /// Closed form of the cellular flux through `{x0} x [y0, y0 + a]` with
    /// normal `e_x`.
    fn cellular_flux(amp: f64, x0: f64, y0: f64, a: f64) -> f64 {
        amp / PI * (PI * x0).sin() * ((PI * (y0 + a)).sin() - (PI * y0).sin())
    }

    #[test]
    fn constant_flux_is_exact() {
        let f = VectorField::constant(&[0.7, 0.0, 0.0]).unwrap();
        let r = flux_cube_face(&f, &face(&[0.0; 3], 0, 2.5), 8.0).unwrap();
        assert!((r.flux - 0.7 * 6.25).abs() < 1e-12);
        assert_eq!(r.area, 6.25);
        let f2 = VectorField::constant(&[-1.5, 2.0]).unwrap();
        let r = flux_cube_face(&f2, &face(&[1.0, 0.0], 0, 3.0), 8.0).unwrap();
        assert!((r.flux + 4.5).abs() < 1e-12);
    }

    #[test]
    fn cellular_flux_matches_closed_form() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        for (x0, y0, a) in [(0.5, 0.25, 1.5), (0.3, 0.1, 4.0), (1.7, 0.6, 2.3)] {
            let r = flux_cube_face(&f, &face(&[x0, y0], 0, a), 256.0).unwrap();
            let exact = cellular_flux(10.0, x0, y0, a);
            assert!((r.flux - exact).abs() < 1e-4, "{} vs {exact}", r.flux);
        }
    }

    #[test]
    fn flux_is_linear_in_the_field() {
        let a = VectorField::cellular(3.0, 1.0, 2).unwrap();
        let b = VectorField::shear(2.0, &[0.3, 1.1]).unwrap();
        let s = a.sum(&b).unwrap();
        let fc = face(&[0.2, -0.4], 1, 2.7);
        let fa = flux_cube_face(&a, &fc, 40.0).unwrap().flux;
        let fb = flux_cube_face(&b, &fc, 40.0).unwrap().flux;
        let fs = flux_cube_face(&s, &fc, 40.0).unwrap().flux;
        assert!((fs - (fa + fb)).abs() <= 1e-12 * (fa.abs() + fb.abs()).max(1.0));
    }

    #[test]
    fn closed_cubes_have_no_net_flux() {
        let fields = [
            VectorField::cellular(10.0, 1.0, 2).unwrap(),
            VectorField::cellular(10.0, 1.0, 3).unwrap(),
            VectorField::shear(5.0, &[1.0, 2.0]).unwrap(),
            VectorField::stream_random(3, 6, 4.0, 2).unwrap(),
            VectorField::mollified_sign(10.0, 0.5).unwrap(),
        ];
        for f in &fields {
            let lower = vec![0.3; f.dim()];
            let r = closed_cube_flux(f, &lower, 2.0, 64.0).unwrap();
            assert!(r.flux.abs() <= 1e-4 * r.area, "{:?}: {}", f.descriptor().name, r.flux);
        }
    }

    #[test]
    fn degenerate_faces_rejected() {
        let f = VectorField::zero(2).unwrap();
        assert!(flux_cube_face(&f, &face(&[0.0, 0.0], 0, 0.0), 8.0).is_err());
        assert!(flux_cube_face(&f, &face(&[0.0, 0.0, 0.0], 0, 1.0), 8.0).is_err());
    }

    fn grid() -> Grid {
        Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[128, 128]).unwrap()
    }

    #[test]
    fn upstream_half_space_sees_the_drift() {
        let g = grid();
        let f = VectorField::constant(&[2.0, 0.0]).unwrap();
        let mask = Mask::from_fn(&g, |p| p[0] >= 0.0);
        let r = boundary_flux_check(&f, &mask).unwrap();
        let s = r.faces.unwrap();
        assert!((r.density - 2.0).abs() < 1e-12);
        assert!((s.p10_density - 2.0).abs() < 1e-12);
        assert_eq!(s.passed, Some(true));
        assert!(!s.vacuous);
    }

    #[test]
    fn still_water_is_vacuous() {
        let g = grid();
        let f = VectorField::zero(2).unwrap();
        let mask = Mask::from_fn(&g, |p| p[0].hypot(p[1]) < 1.0);
        let r = boundary_flux_check(&f, &mask).unwrap();
        let s = r.faces.unwrap();
        assert!(s.vacuous);
        assert_eq!(s.passed, None);
        assert_eq!(r.flux, 0.0);
        // Projected area approximates the circle, not the staircase.
        assert!((r.area / (2.0 * PI) - 1.0).abs() < 0.03, "{}", r.area);
        assert!((s.staircase_area / (8.0) - 1.0).abs() < 0.03);
    }

    #[test]
    fn outward_flow_fails() {
        let g = grid();
        let f = VectorField::constant(&[-2.0, 0.0]).unwrap();
        let mask = Mask::from_fn(&g, |p| p[0] >= 0.0);
        let s = boundary_flux_check(&f, &mask).unwrap().faces.unwrap();
        assert_eq!(s.passed, Some(false));
    }

    #[test]
    fn smoothed_normals_follow_a_disk() {
        let g = grid();
        let f = VectorField::custom(2, "radial-in", Some(3.0), |x, out| {
            let r = x[0].hypot(x[1]);
            out[0] = -3.0 * x[0] / r;
            out[1] = -3.0 * x[1] / r;
        });
        let mask = Mask::from_fn(&g, |p| p[0].hypot(p[1]) < 1.0);
        let r = boundary_flux_check(&f, &mask).unwrap();
        let s = r.faces.unwrap();
        assert!(s.p10_density > 2.9, "{}", s.p10_density);
        assert!((r.density - 3.0).abs() < 0.05);
    }

    #[test]
    fn full_or_empty_masks_rejected() {
        let g = grid();
        let f = VectorField::zero(2).unwrap();
        assert!(boundary_flux_check(&f, &Mask::from_fn(&g, |_| true)).is_err());
        assert!(boundary_flux_check(&f, &Mask::from_fn(&g, |_| false)).is_err());
    }
}
