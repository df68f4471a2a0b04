use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{norm, VectorField, MAX_DIM};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Axis-aligned box `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Regular lattice of cube offsets `origin + spacing * i`, `i < counts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterLattice {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
}

impl CenterLattice {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, mut i: usize) -> Vec<f64> {
        let d = self.origin.len();
        let mut p = vec![0.0; d];
        for k in (0..d).rev() {
            p[k] = self.origin[k] + (i % self.counts[k]) as f64 * self.spacing;
            i /= self.counts[k];
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    /// Cube edge length.
    pub length: f64,
    /// Largest norm of the cube average over the lattice.
    pub drift: f64,
    /// Lattice offset attaining `drift`.
    pub argmax: Vec<f64>,
    pub points_per_axis: usize,
}

/// Cube-averaged drift as a function of the cube size. The supremum over all
/// offsets is replaced by a maximum over `lattice`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    pub entries: Vec<DriftEntry>,
    pub lattice: CenterLattice,
    /// Quadrature points per axis per unit length.
    pub quad_res: f64,
    /// Set when some cube was sampled with fewer than four points per field
    /// feature length.
    pub under_resolved: bool,
}

/// Largest central-difference divergence over the grid nodes.
pub fn divergence_residual(field: &VectorField, grid: &Grid, fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!("fd_step must be positive, got {fd_step}")));
    }
    if field.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: field.dim(),
        });
    }
    let d = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.position(idx);
            let mut p = x.clone();
            let mut v = [0.0; MAX_DIM];
            let mut div = 0.0;
            for k in 0..d {
                p[k] = x[k] + fd_step;
                if !field.in_domain(&p) {
                    return Err(Error::OutsideDomain(p));
                }
                field.eval_into(&p, &mut v[..d]);
                let plus = v[k];
                p[k] = x[k] - fd_step;
                if !field.in_domain(&p) {
                    return Err(Error::OutsideDomain(p));
                }
                field.eval_into(&p, &mut v[..d]);
                div += (plus - v[k]) / (2.0 * fd_step);
                p[k] = x[k];
            }
            Ok(div.abs())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Largest speed over `n_samples` Halton points in `region`. A lower bound on
/// the true supremum.
pub fn sup_norm_estimate(field: &VectorField, region: &BoxRegion, n_samples: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let d = field.dim();
    if region.min.len() != d || region.max.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: region.min.len(),
        });
    }
    Ok((0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = (0..d)
                .map(|k| {
                    let u = radical_inverse(i as u64 + 1, PRIMES[k]);
                    region.min[k] + u * (region.max[k] - region.min[k])
                })
                .collect();
            norm(&field.eval(&x))
        })
        .reduce(|| 0.0, f64::max))
}

/// Norm of the average of `field` over `offset + [0, length]^d` by the
/// tensor-product midpoint rule with `n` points per axis.
fn cube_average_norm(field: &VectorField, offset: &[f64], length: f64, n: usize) -> f64 {
    let d = field.dim();
    let step = length / n as f64;
    let total = n.pow(d as u32);
    let mut sum = vec![0.0; d];
    let mut v = [0.0; MAX_DIM];
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut r = flat;
        for k in (0..d).rev() {
            x[k] = offset[k] + ((r % n) as f64 + 0.5) * step;
            r /= n;
        }
        field.eval_into(&x, &mut v[..d]);
        for k in 0..d {
            sum[k] += v[k];
        }
    }
    let inv = 1.0 / total as f64;
    sum.iter().map(|s| (s * inv).powi(2)).sum::<f64>().sqrt()
}

/// Cube-average drift for each length in `lengths`.
pub fn mean_drift_profile(
    field: &VectorField,
    lengths: &[f64],
    lattice: &CenterLattice,
    quad_res: f64,
) -> Result<DriftProfile> {
    if lengths.is_empty() || lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument("cube lengths must be positive".into()));
    }
    if lengths.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("cube lengths must be sorted ascending".into()));
    }
    if !(quad_res >= 8.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature resolution {quad_res} is below 8 points per unit length"
        )));
    }
    if lattice.origin.len() != field.dim() || lattice.counts.len() != field.dim() || lattice.is_empty() {
        return Err(Error::InvalidArgument("lattice does not match the field dimension".into()));
    }
    let mut under_resolved = false;
    let mut entries = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let n = (quad_res * length).ceil().max(1.0) as usize;
        if length / n as f64 > field.feature_length() / 4.0 {
            under_resolved = true;
        }
        let (drift, at) = (0..lattice.len())
            .into_par_iter()
            .map(|i| {
                let c = lattice.point(i);
                (cube_average_norm(field, &c, length, n), i)
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    // Ties resolve to the lowest lattice index.
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            );
        entries.push(DriftEntry {
            length,
            drift,
            argmax: lattice.point(at),
            points_per_axis: n,
        });
    }
    Ok(DriftProfile {
        entries,
        lattice: lattice.clone(),
        quad_res,
        under_resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_lattice(origin: &[f64], counts: &[usize], spacing: f64) -> CenterLattice {
        CenterLattice {
            origin: origin.to_vec(),
            spacing,
            counts: counts.to_vec(),
        }
    }

    #[test]
    fn residual_of_constant_is_zero() {
        let f = VectorField::constant(&[0.3, -1.2]).unwrap();
        let g = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[16, 16]).unwrap();
        assert_eq!(divergence_residual(&f, &g, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn residual_of_cellular_is_roundoff() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let g = Grid::new(&[0.0, 0.0], &[4.0, 4.0], &[64, 64]).unwrap();
        assert!(divergence_residual(&f, &g, 1e-4).unwrap() < 1e-6);
    }

    #[test]
    fn residual_detects_compressible_probe() {
        let f = VectorField::custom(2, "source", None, |x, out| {
            out[0] = x[0];
            out[1] = 0.0;
        });
        let g = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let r = divergence_residual(&f, &g, 1e-3).unwrap();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn residual_converges_at_second_order() {
        // Mode wavevectors with |k1| != |k2| leave an O(h^2) truncation error.
        let f = VectorField::stream_random(5, 5, 1.0, 2).unwrap();
        let g = Grid::new(&[0.0, 0.0], &[3.0, 3.0], &[24, 24]).unwrap();
        let coarse = divergence_residual(&f, &g, 1e-2).unwrap();
        let fine = divergence_residual(&f, &g, 5e-3).unwrap();
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn tabulated_field_outside_domain_is_an_error() {
        let grid = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let comp = crate::grid::ScalarGridField::filled(grid.clone(), 1.0);
        let f = VectorField::tabulated(vec![comp.clone(), comp], None).unwrap();
        assert!(matches!(
            divergence_residual(&f, &grid, 1e-3),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn sup_norm_examples() {
        let region = BoxRegion {
            min: vec![-2.0, -2.0],
            max: vec![2.0, 2.0],
        };
        let c = VectorField::constant(&[3.0, 4.0]).unwrap();
        assert_eq!(sup_norm_estimate(&c, &region, 10).unwrap(), 5.0);
        let z = VectorField::zero(2).unwrap();
        assert_eq!(sup_norm_estimate(&z, &region, 10).unwrap(), 0.0);
        let s = VectorField::mollified_sign(10.0, 0.5).unwrap();
        let est = sup_norm_estimate(&s, &region, 10_000).unwrap();
        // Dense-grid maximization as the reference.
        let mut dense: f64 = 0.0;
        for i in 0..=400 {
            for j in 0..=400 {
                let x = [-2.0 + i as f64 * 0.01, -2.0 + j as f64 * 0.01];
                dense = dense.max(norm(&s.eval(&x)));
            }
        }
        assert!(est <= 10.0 * 2f64.sqrt() + 1e-12);
        assert!(est >= 14.1);
        assert!((est - dense).abs() < 1e-9);
        assert!(sup_norm_estimate(&s, &region, 0).is_err());
    }

    #[test]
    fn drift_of_constant_is_its_norm() {
        let f = VectorField::constant(&[0.7, 0.0]).unwrap();
        let p = mean_drift_profile(&f, &[1.0, 3.0], &unit_lattice(&[0.0, 0.0], &[3, 3], 1.0), 8.0)
            .unwrap();
        for e in &p.entries {
            assert!((e.drift - 0.7).abs() < 1e-12);
        }
        assert!(!p.under_resolved);
    }

    #[test]
    fn cellular_drift_decays() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let lattice = unit_lattice(&[0.0, 0.0], &[2, 2], 1.0);
        let p = mean_drift_profile(&f, &[2.0, 4.0, 8.0], &lattice, 16.0).unwrap();
        for e in &p.entries {
            assert!(e.drift <= 10.0 / e.length, "L={} drift={}", e.length, e.drift);
        }
        // Whole periods average to zero.
        assert!(p.entries.iter().all(|e| e.drift < 1e-3));
        // Off-period lengths on a half-cell lattice still obey the 1/L bound.
        let lattice = unit_lattice(&[0.0, 0.0], &[4, 4], 0.5);
        let p = mean_drift_profile(&f, &[1.0, 3.0, 5.0], &lattice, 32.0).unwrap();
        for e in &p.entries {
            let oracle = exact_cellular_drift(10.0, e.length, &lattice);
            assert!((e.drift - oracle).abs() < 1e-2 * oracle.max(1e-3), "{} vs {oracle}", e.drift);
            assert!(e.drift <= 10.0 / e.length);
        }
    }

    /// Closed form of the cube average of the cellular flow (cell 1):
    /// mean of sin(pi x) over [a, a+L] is (cos(pi a) - cos(pi (a+L))) / (pi L).
    fn exact_cellular_drift(amp: f64, l: f64, lattice: &CenterLattice) -> f64 {
        let pi = std::f64::consts::PI;
        let ms = |a: f64| ((pi * a).cos() - (pi * (a + l)).cos()) / (pi * l);
        let mc = |a: f64| ((pi * (a + l)).sin() - (pi * a).sin()) / (pi * l);
        (0..lattice.len())
            .map(|i| {
                let c = lattice.point(i);
                let v0 = amp * ms(c[0]) * mc(c[1]);
                let v1 = -amp * mc(c[0]) * ms(c[1]);
                (v0 * v0 + v1 * v1).sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sign_field_drift_does_not_decay() {
        let f = VectorField::mollified_sign(10.0, 0.5).unwrap();
        let lattice = unit_lattice(&[-10.0, -10.0], &[21, 21], 1.0);
        let p = mean_drift_profile(&f, &[8.0], &lattice, 8.0).unwrap();
        assert!(p.entries[0].drift >= 9.0);
        assert!(p.entries[0].drift <= f.sup_bound().unwrap() + 1e-9);
    }

    #[test]
    fn coarse_quadrature_is_flagged() {
        let f = VectorField::cellular(1.0, 0.25, 2).unwrap();
        let p = mean_drift_profile(&f, &[2.0], &unit_lattice(&[0.0, 0.0], &[1, 1], 1.0), 8.0)
            .unwrap();
        assert!(p.under_resolved);
        assert!(mean_drift_profile(&f, &[2.0], &unit_lattice(&[0.0, 0.0], &[1, 1], 1.0), 4.0).is_err());
        assert!(mean_drift_profile(&f, &[2.0, 1.0], &unit_lattice(&[0.0, 0.0], &[1, 1], 1.0), 8.0).is_err());
    }
}
