//! Near-optimal paths recovered from an arrival-time field.
//!
//! The optimal control points along the gradient of the arrival field, so the
//! path is traced backwards from the target by following `-(V + g)` with `g`
//! the unit gradient, until it enters the source ball. The forward control is
//! then built as feedback on the time-to-go field, which is the arrival field
//! of the target in the reversed flow. Open-loop replay of the backward
//! directions drifts off in strained flows; the feedback does not care where
//! the swimmer actually is.

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, piece_steps, replay_error, rk4_step, ControlSignal, Trajectory};
use crate::error::{Error, Result};
use crate::flowfield::{VectorField, MAX_DIM};
use crate::grid::{Grid, ScalarGridField};
use crate::levelset::{solve_arrival, source_radius, untrusted_band};

/// Steps over which the backward path must move at least `1e-3 h`.
const STAGNATION_WINDOW: usize = 50;

/// Refinement of the local time-to-go field near the target.
const LOCAL_REFINE: usize = 4;
/// Half-width of the local field's box, in grid spacings.
const LOCAL_REACH: f64 = 48.0;

/// Piece `k` of a control with breakpoints `k * dt`, stepped as the replay
/// steps it.
fn advance(field: &VectorField, x: &mut [f64], a: &[f64], dt: f64, k: usize) {
    let (n, h_step) = piece_steps((k + 1) as f64 * dt - k as f64 * dt, dt);
    for _ in 0..n {
        rk4_step(field, x, a, h_step);
    }
}

/// Time-to-go field of `target` on a box of half-width `16 h` around it, at
/// a quarter of the spacing, clipped to the grid.
fn local_to_go(field: &VectorField, grid: &Grid, target: &[f64], horizon: f64, cfl: f64) -> Result<ScalarGridField> {
    let h = grid.h();
    let fine = h / LOCAL_REFINE as f64;
    let d = grid.dim();
    let mut min = vec![0.0; d];
    let mut nodes = vec![0; d];
    for k in 0..d {
        let lo = (target[k] - LOCAL_REACH * h).max(grid.min()[k]);
        let hi = (target[k] + LOCAL_REACH * h).min(grid.max(k));
        min[k] = lo;
        nodes[k] = ((hi - lo) / fine).floor() as usize + 1;
    }
    let local = Grid::from_nodes(&min, &nodes, fine)?;
    solve_arrival(&field.negated(), &local, target, horizon, cfl)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub duration: f64,
    pub replay_error: f64,
    pub clip_fraction: f64,
    /// Arrival time interpolated at the target.
    pub arrival: f64,
    pub backward_steps: usize,
    /// Largest rise of the arrival field along the backward path above its
    /// running minimum.
    pub max_rise: f64,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    /// The replay of `control` from the source.
    pub trajectory: Trajectory,
    pub control: ControlSignal,
    /// Backward waypoints in forward order, ending at the target.
    pub path: Vec<Vec<f64>>,
    pub summary: ExtractionSummary,
}

/// Unit gradient of the arrival field at `p`, by multilinear interpolation of
/// node gradients. Node gradients use central differences, falling back to a
/// one-sided difference next to an unreached node.
fn unit_gradient(arrival: &ScalarGridField, p: &[f64]) -> Result<[f64; MAX_DIM]> {
    let grid = arrival.grid();
    let d = grid.dim();
    let undefined = || Error::GradientUndefined(p.to_vec());
    let (base, frac) = grid.locate(p).ok_or_else(undefined)?;
    let strides = grid.strides();
    let vals = arrival.values();
    let mut g = [0.0; MAX_DIM];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        let mut m = [0usize; MAX_DIM];
        for k in 0..d {
            let up = (corner >> k) & 1 == 1;
            m[k] = base[k] + up as usize;
            idx += m[k] * strides[k];
            w *= if up { frac[k] } else { 1.0 - frac[k] };
        }
        if w == 0.0 {
            continue;
        }
        let c = vals[idx];
        if !c.is_finite() {
            return Err(undefined());
        }
        for k in 0..d {
            let lo = (m[k] > 0).then(|| vals[idx - strides[k]]).filter(|v| v.is_finite());
            let hi = (m[k] + 1 < grid.nodes()[k])
                .then(|| vals[idx + strides[k]])
                .filter(|v| v.is_finite());
            let dk = match (lo, hi) {
                (Some(a), Some(b)) => (b - a) / (2.0 * grid.h()),
                (Some(a), None) => (c - a) / grid.h(),
                (None, Some(b)) => (b - c) / grid.h(),
                (None, None) => return Err(undefined()),
            };
            g[k] += w * dk;
        }
    }
    let n = g[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(undefined());
    }
    g[..d].iter_mut().for_each(|x| *x /= n);
    Ok(g)
}

/// One RK4 step of `y' = -(V(y) + g(y))`.
fn backward_step(field: &VectorField, arrival: &ScalarGridField, y: &mut [f64], dt: f64) -> Result<()> {
    let d = y.len();
    let rate = |x: &[f64], out: &mut [f64]| -> Result<()> {
        let g = unit_gradient(arrival, x)?;
        field.eval_into(x, out);
        for k in 0..d {
            out[k] = -(out[k] + g[k]);
        }
        Ok(())
    };
    let (mut k1, mut k2, mut k3, mut k4, mut z) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
    rate(y, &mut k1[..d])?;
    for k in 0..d {
        z[k] = y[k] + 0.5 * dt * k1[k];
    }
    rate(&z[..d], &mut k2[..d])?;
    for k in 0..d {
        z[k] = y[k] + 0.5 * dt * k2[k];
    }
    rate(&z[..d], &mut k3[..d])?;
    for k in 0..d {
        z[k] = y[k] + dt * k3[k];
    }
    rate(&z[..d], &mut k4[..d])?;
    for k in 0..d {
        y[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    Ok(())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest flow speed over the nodes of the arrival grid, or the field's
/// declared bound.
fn speed_bound(field: &VectorField, arrival: &ScalarGridField) -> f64 {
    if let Some(m) = field.sup_bound() {
        return m;
    }
    let grid = arrival.grid();
    let mut v = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|i| {
            field.eval_into(&grid.position(i), &mut v);
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

/// Path and control from `source` to `target`, with backward steps moving at
/// most `step` (half a grid spacing is customary). `cfl` is used for the
/// time-to-go solve.
pub fn extract(
    field: &VectorField,
    arrival: &ScalarGridField,
    source: &[f64],
    target: &[f64],
    step: f64,
    cfl: f64,
) -> Result<Extraction> {
    let grid = arrival.grid();
    let d = grid.dim();
    if field.dim() != d || source.len() != d || target.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: target.len() });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if grid.distance_to_boundary(target) < untrusted_band(grid) {
        return Err(Error::InvalidArgument(format!(
            "target {target:?} lies in the untrusted band along the walls"
        )));
    }
    let t_target = arrival.interpolate(target).unwrap_or(f64::INFINITY);
    if !t_target.is_finite() {
        return Err(Error::InfiniteTravelTime {
            from: source.to_vec(),
            to: target.to_vec(),
        });
    }

    // Backward descent.
    let h = grid.h();
    let dt = step / (speed_bound(field, arrival) + 1.0);
    let stop = source_radius(grid) + h;
    let limit = 20 * (t_target / dt).ceil() as usize + 10_000;
    let mut back = vec![target.to_vec()];
    let mut y = target.to_vec();
    let mut lowest = t_target;
    let mut max_rise: f64 = 0.0;
    while distance(&y, source) > stop {
        if back.len() > limit {
            return Err(Error::DescentExhausted(limit));
        }
        backward_step(field, arrival, &mut y, dt)?;
        if let Some(t) = arrival.interpolate(&y) {
            max_rise = max_rise.max(t - lowest);
            lowest = lowest.min(t);
        }
        back.push(y.clone());
        let n = back.len();
        if n > STAGNATION_WINDOW && distance(&y, &back[n - 1 - STAGNATION_WINDOW]) < 1e-3 * h {
            return Err(Error::DescentStagnated(y));
        }
    }
    back.reverse();
    let path = back;

    // Forward pass: feedback on the time-to-go field, solved from the target
    // in the reversed flow. That field is flat inside its own source ball of
    // radius 2h, which would steer the swimmer to the rim rather than the
    // target, so close in a finer local field takes over. The pass ends
    // within h of the target, or at a closest approach within 1.5h. Every
    // piece is stepped exactly as the replay
    // will be.
    let horizon = 1.5 * t_target + 8.0 * h;
    let to_go = solve_arrival(&field.negated(), grid, target, horizon, cfl)?;
    let handoff = (LOCAL_REACH - 8.0) * h;
    let max_steps = 4 * (horizon / dt).ceil() as usize + 1000;
    let mut local: Option<ScalarGridField> = None;
    let mut x = source.to_vec();
    let mut values: Vec<Vec<f64>> = Vec::new();
    loop {
        let gap = distance(&x, target);
        if gap <= h && !values.is_empty() {
            break;
        }
        if values.len() >= max_steps {
            return Err(Error::DescentExhausted(max_steps));
        }
        if local.is_none() && gap <= handoff {
            let budget = to_go.interpolate(&x).unwrap_or(0.0);
            local = Some(local_to_go(field, grid, target, 2.0 * budget + 16.0 * h, cfl)?);
        }
        let g = match local.as_ref().map(|l| unit_gradient(l, &x)) {
            Some(Ok(g)) => g,
            _ => match unit_gradient(&to_go, &x) {
                Ok(g) => g,
                Err(_) if gap <= 2.0 * h && !values.is_empty() => break,
                Err(e) => return Err(e),
            },
        };
        let a: Vec<f64> = g[..d].iter().map(|c| -c).collect();
        let mut next = x.clone();
        advance(field, &mut next, &a, dt, values.len());
        // Closest approach, close enough.
        if gap <= 1.5 * h && distance(&next, target) > gap && !values.is_empty() {
            break;
        }
        x = next;
        if !field.in_domain(&x) {
            return Err(Error::OutsideDomain(x));
        }
        values.push(a);
    }
    let t_end = values.len() as f64 * dt;
    let breakpoints: Vec<f64> = (0..values.len()).map(|k| k as f64 * dt).collect();
    let control = ControlSignal::new(breakpoints, values, 1.0)?;
    let trajectory = integrate(field, source, &control, t_end, dt)?;
    let (error, duration) = replay_error(&trajectory, target);
    Ok(Extraction {
        summary: ExtractionSummary {
            duration,
            replay_error: error,
            // Controls are unit gradients, so nothing needs clipping.
            clip_fraction: 0.0,
            arrival: t_target,
            backward_steps: path.len() - 1,
            max_rise,
        },
        trajectory,
        control,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(field: &VectorField, cells: usize) -> (Grid, ScalarGridField) {
        let g = Grid::new(&[-1.5, -1.5], &[1.5, 1.5], &[cells, cells]).unwrap();
        let t = solve_arrival(field, &g, &[0.0, 0.0], 6.0, 0.4).unwrap();
        (g, t)
    }

    #[test]
    fn still_water_path_is_straight() {
        let f = VectorField::zero(2).unwrap();
        let (g, t) = setup(&f, 128);
        let h = g.h();
        let target = [0.8, 0.6];
        let ex = extract(&f, &t, &[0.0, 0.0], &target, h / 2.0, 0.4).unwrap();
        for p in &ex.path {
            // Distance from the segment through the origin and the target.
            let lateral = (p[0] * 0.6 - p[1] * 0.8).abs();
            assert!(lateral <= 2.0 * h, "{p:?}");
        }
        assert!((ex.summary.duration - 1.0).abs() <= 4.0 * h, "{}", ex.summary.duration);
        assert!(ex.summary.replay_error <= 2.0 * h);
        assert!(ex.summary.max_rise <= 2.0 * h);
        assert!(ex.control.values().iter().all(|a| a.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12));
    }

    #[test]
    fn upstream_target_in_drift() {
        let f = VectorField::constant(&[0.5, 0.0]).unwrap();
        let (g, t) = setup(&f, 128);
        let ex = extract(&f, &t, &[0.0, 0.0], &[-1.0, 0.0], g.h() / 2.0, 0.4).unwrap();
        assert!((ex.summary.duration - 2.0).abs() <= 0.07 * 2.0, "{}", ex.summary.duration);
        assert!(ex.summary.replay_error <= 2.0 * g.h());
    }

    #[test]
    fn replay_lands_in_a_cellular_flow() {
        // Walls on cell boundaries, which the flow runs along.
        let f = VectorField::cellular(4.0, 1.0, 2).unwrap();
        let g = Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[256, 256]).unwrap();
        let src = [0.3, 0.2];
        let t = solve_arrival(&f, &g, &src, 6.0, 0.4).unwrap();
        let h = g.h();
        for target in [[1.1, -0.7], [-0.9, 1.2], [0.35, 0.4], [-1.6, -1.5]] {
            let ex = extract(&f, &t, &src, &target, h / 2.0, 0.4).unwrap();
            let s = &ex.summary;
            assert!(s.replay_error <= 2.0 * h, "{target:?}: {s:?}");
            assert!(s.duration <= 1.05 * s.arrival + 4.0 * h, "{target:?}: {s:?}");
        }
    }

    #[test]
    fn unreached_target_rejected() {
        let f = VectorField::constant(&[2.0, 0.0]).unwrap();
        let (g, t) = setup(&f, 64);
        let err = extract(&f, &t, &[0.0, 0.0], &[-1.0, 0.0], g.h() / 2.0, 0.4).unwrap_err();
        assert!(matches!(err, Error::InfiniteTravelTime { .. }));
        let err = extract(&f, &t, &[0.0, 0.0], &[1.49, 0.0], g.h() / 2.0, 0.4).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
