//! Arrival times by front propagation.
//!
//! The zero set of `phi` is the boundary of everything reached so far. It moves
//! outward with normal speed `max(V . n + 1, 0)`, i.e. `phi_t + max(H(grad phi),
//! 0) = 0` with `H(p) = V . p + |p|`; the unclamped equation tracks the set
//! reachable at exactly time `t`, which has the same first-arrival times.
//!
//! `H(p)` is the largest rate `(V + a) . p` over controls `|a| <= 1`, and the
//! scheme upwinds each of those advection rates before maximizing. The result
//! is monotone under the step bound below, and along an axis where `|V_i| > 1`
//! it only ever looks upstream, so regions the flow seals off stay unreached.
//! The box walls are reflecting (mirror ghost nodes).
//!
//! Once a node is reached its value is no longer evolved: it keeps decreasing
//! at the rate it had when crossing zero. Without this the region behind the
//! front flattens out at the bottom of the initial profile, and the smeared
//! corner where it meets the front slows the front down by several percent.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowfield::{VectorField, MAX_DIM};
use crate::grid::{Grid, ScalarGridField};

pub const DEFAULT_CFL: f64 = 0.4;
/// Source ball radius in grid spacings.
pub const SOURCE_RADIUS_CELLS: f64 = 2.0;
/// Width, in grid spacings, of the band along the box walls whose values are
/// not trusted.
pub const UNTRUSTED_BAND_CELLS: f64 = 4.0;

const ROWS_PER_TASK: usize = 16;
const TILE_COLS: usize = 64;

pub fn source_radius(grid: &Grid) -> f64 {
    SOURCE_RADIUS_CELLS * grid.h()
}

pub fn untrusted_band(grid: &Grid) -> f64 {
    UNTRUSTED_BAND_CELLS * grid.h()
}

/// Node velocities, one vector per axis.
fn sample_velocity(field: &VectorField, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    let d = grid.dim();
    let mut flat = vec![0.0; grid.len() * d];
    flat.par_chunks_mut(d)
        .enumerate()
        .try_for_each(|(idx, v)| {
            let mut x = [0.0; MAX_DIM];
            grid.position_into(idx, &mut x[..d]);
            if !field.in_domain(&x[..d]) {
                return Err(Error::OutsideDomain(x[..d].to_vec()));
            }
            field.eval_into(&x[..d], v);
            Ok(())
        })?;
    Ok((0..d)
        .map(|a| flat.iter().skip(a).step_by(d).copied().collect())
        .collect())
}

fn max_speed_sum(vel: &[Vec<f64>]) -> f64 {
    (0..vel[0].len())
        .into_par_iter()
        .map(|i| vel.iter().map(|v| v[i].abs() + 1.0).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}

/// Time step used by [`solve_arrival`]; the scheme is monotone for `cfl <= 0.5`.
pub fn time_step(field: &VectorField, grid: &Grid, cfl: f64) -> Result<f64> {
    let vel = sample_velocity(field, grid)?;
    Ok(2.0 * cfl * grid.h() / max_speed_sum(&vel))
}

fn check_inputs(field: &VectorField, grid: &Grid, source: &[f64], horizon: f64, cfl: f64) -> Result<()> {
    let d = grid.dim();
    if field.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: field.dim() });
    }
    if source.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: source.len() });
    }
    if !(cfl > 0.0 && cfl <= 0.5) {
        return Err(Error::InvalidArgument(format!("cfl {cfl} outside (0, 0.5]")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive and finite, got {horizon}")));
    }
    if let Some(n) = grid.nodes().iter().find(|&&n| n < 9) {
        return Err(Error::InvalidGrid(format!("{} cells on an axis, at least 8 required", n - 1)));
    }
    let margin = untrusted_band(grid) * (1.0 - 1e-9);
    if (0..d).any(|a| source[a] - grid.min()[a] < margin || grid.max(a) - source[a] < margin) {
        return Err(Error::SourceOutsideGrid(source.to_vec()));
    }
    Ok(())
}

/// Start of the front: the set reachable by time `ts` in the flow frozen at
/// its source value `v`, i.e. the union of the balls `|w - v t| <= t` for
/// `t <= ts`, at offset `w` from the source. Returns a level-set value for
/// that set and, inside it, the earliest time `w` is reached.
fn frozen_start(w: &[f64], v: &[f64], ts: f64) -> (f64, f64) {
    let gap = |t: f64| w.iter().zip(v).map(|(a, b)| (a - b * t).powi(2)).sum::<f64>().sqrt() - t;
    let vv: f64 = v.iter().map(|a| a * a).sum();
    let phi = if vv < 1.0 {
        gap(ts)
    } else {
        // gap is convex in t; ternary search for its minimum.
        let (mut lo, mut hi) = (0.0, ts);
        for _ in 0..80 {
            let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if gap(m1) <= gap(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        gap(0.5 * (lo + hi)).min(gap(ts)).min(gap(0.0))
    };
    if phi > 0.0 {
        return (phi, f64::INFINITY);
    }
    // Earliest root of |w - v t|^2 = t^2.
    let ww: f64 = w.iter().map(|a| a * a).sum();
    let wv: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
    let a = vv - 1.0;
    let t = if ww == 0.0 {
        0.0
    } else if a.abs() < 1e-12 {
        ww / (2.0 * wv)
    } else {
        let disc = (wv * wv - a * ww).max(0.0).sqrt();
        let (r1, r2) = ((wv - disc) / a, (wv + disc) / a);
        let (r1, r2) = (r1.min(r2), r1.max(r2));
        if r1 >= 0.0 {
            r1
        } else {
            r2
        }
    };
    (phi, t.clamp(0.0, ts))
}

/// Best candidate so far, ignoring rejected (`ok == false`) or NaN values.
#[inline(always)]
fn keep(best: f64, value: f64, ok: bool) -> f64 {
    if ok & (value > best) {
        value
    } else {
        best
    }
}

/// Upwind flux along one axis for velocity component `b`.
#[inline(always)]
fn flux(b: f64, dm: f64, dp: f64) -> f64 {
    if b > 0.0 {
        b * dm
    } else {
        b * dp
    }
}

/// Numerical Hamiltonian on a 2-D node in units of `1 / h`, clamped below at 0:
/// the largest upwind flux over velocities `v + a`, `|a| <= 1`.
///
/// The flux is linear on each quadrant of velocity space, so the maximum sits
/// at the tangent point of one quadrant's gradient `w` (worth `w . v + |w|`,
/// kept only if the tangent velocity really lies in that quadrant) or where
/// the disk meets an axis. `rx = sqrt(1 - vx^2)` is NaN when `|vx| > 1`, in
/// which case the disk misses the line `b_x = 0`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn hamiltonian_2d(p: f64, xm: f64, xp: f64, ym: f64, yp: f64, vx: f64, vy: f64, rx: f64, ry: f64) -> f64 {
    let (dmx, dpx, dmy, dpy) = (p - xm, xp - p, p - ym, yp - p);
    let mut best = 0.0;
    for (wx, fx) in [(dmx, true), (dpx, false)] {
        for (wy, fy) in [(dmy, true), (dpy, false)] {
            let n = (wx * wx + wy * wy).sqrt();
            let (bx, by) = (vx * n + wx, vy * n + wy);
            let ok = (if fx { bx >= 0.0 } else { bx <= 0.0 }) & (if fy { by >= 0.0 } else { by <= 0.0 });
            best = keep(best, wx * vx + wy * vy + n, ok);
        }
    }
    best = keep(best, flux(vy + rx, dmy, dpy), true);
    best = keep(best, flux(vy - rx, dmy, dpy), true);
    best = keep(best, flux(vx + ry, dmx, dpx), true);
    keep(best, flux(vx - ry, dmx, dpx), true)
}

/// Same Hamiltonian in any dimension. Each axis is either free, looking
/// backward or forward, or pinned to zero velocity with `a_i = -v_i`.
fn hamiltonian_generic(dm: &[f64], dp: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut best = 0.0;
    let mut choice = [0u8; MAX_DIM];
    for code in 0..3usize.pow(d as u32) {
        let mut k = code;
        let mut rest = 1.0;
        for i in 0..d {
            choice[i] = (k % 3) as u8;
            k /= 3;
            if choice[i] == 0 {
                rest -= v[i] * v[i];
            }
        }
        let mut free = [0usize; MAX_DIM];
        let mut nf = 0;
        for i in 0..d {
            if choice[i] != 0 {
                free[nf] = i;
                nf += 1;
            }
        }
        let free = &free[..nf];
        if rest < 0.0 || free.is_empty() {
            continue;
        }
        let r = rest.sqrt();
        if let [i] = *free {
            // One free axis: the candidates are the two ends of the chord.
            if choice[i] == 1 {
                best = keep(best, flux(v[i] + r, dm[i], dp[i]), true);
                best = keep(best, flux(v[i] - r, dm[i], dp[i]), true);
            }
            continue;
        }
        let w = |i: usize| if choice[i] == 1 { dm[i] } else { dp[i] };
        let n = free.iter().fold(0.0, |acc, &i| acc + w(i) * w(i)).sqrt();
        let ok = free.iter().all(|&i| {
            let b = v[i] * n + r * w(i);
            if choice[i] == 1 {
                b >= 0.0
            } else {
                b <= 0.0
            }
        });
        let value = free.iter().fold(0.0, |acc, &i| acc + w(i) * v[i]) + r * n;
        best = keep(best, value, ok);
    }
    best
}

/// Per-node data for the 2-D kernel.
struct Coef2 {
    vx: Vec<f64>,
    vy: Vec<f64>,
    rx: Vec<f64>,
    ry: Vec<f64>,
}

impl Coef2 {
    fn new(mut vel: Vec<Vec<f64>>) -> Self {
        let root = |v: &Vec<f64>| v.par_iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let (rx, ry) = (root(&vel[0]), root(&vel[1]));
        let vy = vel.pop().unwrap();
        let vx = vel.pop().unwrap();
        Self { vx, vy, rx, ry }
    }
}

/// Mutable per-node solver state besides `phi`.
struct Front<'a> {
    arrival: &'a mut [f64],
    /// Decrease rate of `phi` once reached; 0 while unreached.
    rate: &'a mut [f64],
}

/// Steps reached nodes at their frozen rate and records the first crossing of
/// zero for the others. Returns how many nodes were reached in this step.
#[inline(always)]
fn finish(old: &[f64], out: &mut [f64], front: &mut Front<'_>, t0: f64, dt: f64) -> usize {
    let n = out.len();
    let (old, rate) = (&old[..n], &front.rate[..n]);
    let mut hits = 0usize;
    for k in 0..n {
        let r = rate[k];
        let v = if r > 0.0 { old[k] - r * dt } else { out[k] };
        out[k] = v;
        hits += ((r == 0.0) & (v <= 0.0)) as usize;
    }
    if hits > 0 {
        for k in 0..n {
            if front.rate[k] == 0.0 && out[k] <= 0.0 {
                let (po, pn) = (old[k], out[k]);
                front.arrival[k] = t0 + dt * (po / (po - pn));
                front.rate[k] = (po - pn) / dt;
            }
        }
    }
    hits
}

/// Scheme update of nodes `lo..hi` of one row.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn row_2d(w: &[f64], r: &[f64], e: &[f64], cf: [&[f64]; 4], c: f64, out: &mut [f64], lo: usize, hi: usize) {
    let n = r.len();
    let [vx, vy, rx, ry] = cf;
    let node = |j: usize, ym: f64, yp: f64| {
        r[j] - c * hamiltonian_2d(r[j], w[j], e[j], ym, yp, vx[j], vy[j], rx[j], ry[j])
    };
    let (mut a, mut b) = (lo, hi);
    if a == 0 {
        out[0] = node(0, r[1], r[1]);
        a = 1;
    }
    if b == n {
        out[n - 1] = node(n - 1, r[n - 2], r[n - 2]);
        b = n - 1;
    }
    if a >= b {
        return;
    }
    // Equal-length slices so the loop compiles without bounds checks.
    let (w, e) = (&w[a..b], &e[a..b]);
    let (vx, vy, rx, ry) = (&vx[a..b], &vy[a..b], &rx[a..b], &ry[a..b]);
    let (rm, rc, rp) = (&r[a - 1..b - 1], &r[a..b], &r[a + 1..b + 1]);
    let o = &mut out[a..b];
    for j in 0..o.len() {
        o[j] = rc[j] - c * hamiltonian_2d(rc[j], w[j], e[j], rm[j], rp[j], vx[j], vy[j], rx[j], ry[j]);
    }
}

/// Advances one grid row tile by tile. Tiles with `run[t] == false` are
/// copied unchanged; `changed[t]` is set for tiles where some value moved.
/// Returns the number of newly reached nodes.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn advance_row(
    w: &[f64],
    r: &[f64],
    e: &[f64],
    cf: [&[f64]; 4],
    c: f64,
    out: &mut [f64],
    front: &mut Front<'_>,
    t0: f64,
    dt: f64,
    run: &[bool],
    changed: &mut [bool],
) -> usize {
    let n = r.len();
    let mut reached = 0;
    for (t, (&go, moved)) in run.iter().zip(changed.iter_mut()).enumerate() {
        let (lo, hi) = (t * TILE_COLS, ((t + 1) * TILE_COLS).min(n));
        if !go {
            out[lo..hi].copy_from_slice(&r[lo..hi]);
            continue;
        }
        let open = front.rate[lo..hi].iter().fold(0usize, |acc, &x| acc + (x == 0.0) as usize);
        if open > 0 {
            row_2d(w, r, e, cf, c, out, lo, hi);
        }
        let mut part = Front {
            arrival: &mut front.arrival[lo..hi],
            rate: &mut front.rate[lo..hi],
        };
        reached += finish(&r[lo..hi], &mut out[lo..hi], &mut part, t0, dt);
        let (o, old) = (&out[lo..hi], &r[lo..hi]);
        *moved |= o.iter().zip(old).fold(false, |acc, (a, b)| acc | (a != b));
    }
    reached
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn advance_row_avx2(
    w: &[f64],
    r: &[f64],
    e: &[f64],
    cf: [&[f64]; 4],
    c: f64,
    out: &mut [f64],
    front: &mut Front<'_>,
    t0: f64,
    dt: f64,
    run: &[bool],
    changed: &mut [bool],
) -> usize {
    advance_row(w, r, e, cf, c, out, front, t0, dt, run, changed)
}

/// The AVX2 build performs the same IEEE operations as the portable one (no
/// fused multiply-adds), so both give identical bits.
#[allow(clippy::too_many_arguments)]
fn advance_row_dispatch(
    w: &[f64],
    r: &[f64],
    e: &[f64],
    cf: [&[f64]; 4],
    c: f64,
    out: &mut [f64],
    front: &mut Front<'_>,
    t0: f64,
    dt: f64,
    run: &[bool],
    changed: &mut [bool],
) -> usize {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { advance_row_avx2(w, r, e, cf, c, out, front, t0, dt, run, changed) };
    }
    advance_row(w, r, e, cf, c, out, front, t0, dt, run, changed)
}

/// Tiles of `ROWS_PER_TASK x TILE_COLS` nodes. A tile whose values and whose
/// neighbours' values did not move in the last step cannot move in this one,
/// since each update reads only adjacent nodes; such tiles are skipped.
struct Tiles {
    rows: usize,
    cols: usize,
    changed: Vec<bool>,
}

impl Tiles {
    fn new(nodes: &[usize]) -> Self {
        let rows = nodes[0].div_ceil(ROWS_PER_TASK);
        let cols = nodes[1].div_ceil(TILE_COLS);
        Self {
            rows,
            cols,
            changed: vec![true; rows * cols],
        }
    }

    fn run_flags(&self) -> Vec<bool> {
        let (nr, nc) = (self.rows, self.cols);
        let mut run = vec![false; nr * nc];
        for i in 0..nr {
            for j in 0..nc {
                let mut any = false;
                for a in i.saturating_sub(1)..(i + 2).min(nr) {
                    for b in j.saturating_sub(1)..(j + 2).min(nc) {
                        any |= self.changed[a * nc + b];
                    }
                }
                run[i * nc + j] = any;
            }
        }
        run
    }
}

/// One explicit step on a 2-D grid; returns the number of newly reached nodes.
#[allow(clippy::too_many_arguments)]
fn step_2d(
    nodes: &[usize],
    phi: &[f64],
    cf: &Coef2,
    c: f64,
    out: &mut [f64],
    arrival: &mut [f64],
    rate: &mut [f64],
    tiles: &mut Tiles,
    t0: f64,
    dt: f64,
) -> usize {
    let (nx, ny) = (nodes[0], nodes[1]);
    let block = ny * ROWS_PER_TASK;
    let nc = tiles.cols;
    let run = tiles.run_flags();
    let mut changed = vec![false; tiles.changed.len()];
    let reached = out
        .par_chunks_mut(block)
        .zip(arrival.par_chunks_mut(block))
        .zip(rate.par_chunks_mut(block))
        .zip(changed.par_chunks_mut(nc))
        .enumerate()
        .map(|(chunk, (((ob, ab), rb), moved))| {
            let run = &run[chunk * nc..(chunk + 1) * nc];
            let mut reached = 0;
            let rows = ob.chunks_mut(ny).zip(ab.chunks_mut(ny)).zip(rb.chunks_mut(ny));
            for (k, ((row_out, arrival), rate)) in rows.enumerate() {
                let i = chunk * ROWS_PER_TASK + k;
                let row = |r: usize| &phi[r * ny..(r + 1) * ny];
                let w = if i == 0 { row(1) } else { row(i - 1) };
                let e = if i == nx - 1 { row(nx - 2) } else { row(i + 1) };
                let span = i * ny..(i + 1) * ny;
                let cfr = [
                    &cf.vx[span.clone()],
                    &cf.vy[span.clone()],
                    &cf.rx[span.clone()],
                    &cf.ry[span],
                ];
                let mut front = Front { arrival, rate };
                reached += advance_row_dispatch(w, row(i), e, cfr, c, row_out, &mut front, t0, dt, run, moved);
            }
            reached
        })
        .sum();
    tiles.changed = changed;
    reached
}

#[allow(clippy::too_many_arguments)]
fn step_generic(
    nodes: &[usize],
    strides: &[usize],
    phi: &[f64],
    vel: &[Vec<f64>],
    c: f64,
    out: &mut [f64],
    arrival: &mut [f64],
    rate: &mut [f64],
    t0: f64,
    dt: f64,
) -> usize {
    let d = nodes.len();
    const BLOCK: usize = 4096;
    out.par_chunks_mut(BLOCK)
        .zip(arrival.par_chunks_mut(BLOCK))
        .zip(rate.par_chunks_mut(BLOCK))
        .enumerate()
        .map(|(chunk, ((ob, arrival), rate))| {
            let (mut dm, mut dp, mut v) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
            let base = chunk * BLOCK;
            for (k, o) in ob.iter_mut().enumerate() {
                let idx = base + k;
                let p = phi[idx];
                for a in 0..d {
                    let coord = (idx / strides[a]) % nodes[a];
                    let st = strides[a];
                    let pm = if coord == 0 { phi[idx + st] } else { phi[idx - st] };
                    let pp = if coord == nodes[a] - 1 { phi[idx - st] } else { phi[idx + st] };
                    dm[a] = p - pm;
                    dp[a] = pp - p;
                    v[a] = vel[a][idx];
                }
                *o = p - c * hamiltonian_generic(&dm[..d], &dp[..d], &v[..d]);
            }
            let old = &phi[base..base + ob.len()];
            finish(old, ob, &mut Front { arrival, rate }, t0, dt)
        })
        .sum()
}

/// Arrival-time field from `source`, with `+inf` for nodes not reached by
/// `horizon`.
///
/// The front starts at time `2h` from the set reachable by then in the flow
/// frozen at its source value, and nodes inside that set hold their
/// frozen-flow arrival times.
///
/// The step size depends only on the field, grid and `cfl`, so runs with
/// different horizons agree exactly wherever both are finite.
pub fn solve_arrival(
    field: &VectorField,
    grid: &Grid,
    source: &[f64],
    horizon: f64,
    cfl: f64,
) -> Result<ScalarGridField> {
    solve(field, grid, source, horizon, cfl, grid.dim() == 2)
}

fn solve(
    field: &VectorField,
    grid: &Grid,
    source: &[f64],
    horizon: f64,
    cfl: f64,
    planar: bool,
) -> Result<ScalarGridField> {
    check_inputs(field, grid, source, horizon, cfl)?;
    let d = grid.dim();
    let h = grid.h();
    let vel = sample_velocity(field, grid)?;
    let dt = 2.0 * cfl * h / max_speed_sum(&vel);
    if horizon < dt {
        return Err(Error::HorizonTooShort { horizon, dt });
    }
    let c = dt / h;

    let ts = source_radius(grid);
    let v0 = field.eval(source);
    let mut phi = vec![0.0; grid.len()];
    let mut arrival = vec![f64::INFINITY; grid.len()];
    phi.par_chunks_mut(4096)
        .zip(arrival.par_chunks_mut(4096))
        .enumerate()
        .for_each(|(chunk, (block, times))| {
            let mut x = [0.0; MAX_DIM];
            for (k, (p, t)) in block.iter_mut().zip(times.iter_mut()).enumerate() {
                grid.position_into(chunk * 4096 + k, &mut x[..d]);
                for a in 0..d {
                    x[a] -= source[a];
                }
                (*p, *t) = frozen_start(&x[..d], &v0, ts);
            }
        });
    let inside = |p: &f64| *p <= 0.0;
    let mut rate: Vec<f64> = phi.iter().map(|p| if inside(p) { 1.0 } else { 0.0 }).collect();
    let mut remaining = phi.iter().filter(|p| !inside(p)).count();
    let mut next = vec![0.0; grid.len()];
    let nodes = grid.nodes().to_vec();
    let strides = grid.strides();
    let coef2 = planar.then(|| Coef2::new(vel.clone()));
    let mut tiles = Tiles::new(&nodes);

    let mut k = 0usize;
    while remaining > 0 {
        let t0 = ts + k as f64 * dt;
        if t0 >= horizon {
            break;
        }
        remaining -= match &coef2 {
            Some(cf) => step_2d(&nodes, &phi, cf, c, &mut next, &mut arrival, &mut rate, &mut tiles, t0, dt),
            None => step_generic(&nodes, &strides, &phi, &vel, c, &mut next, &mut arrival, &mut rate, t0, dt),
        };
        std::mem::swap(&mut phi, &mut next);
        k += 1;
    }
    arrival.par_iter_mut().for_each(|a| {
        if *a > horizon {
            *a = f64::INFINITY;
        }
    });
    ScalarGridField::new(grid.clone(), arrival)
}

/// Boolean node mask on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid,
    values: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, values: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> bool) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> bool {
        self.values[idx]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.values.iter().zip(&other.values).all(|(&a, &b)| !a || b)
    }
}

/// Nodes whose arrival time is strictly below `tau`.
pub fn reachable_mask(arrival: &ScalarGridField, tau: f64) -> Result<Mask> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be non-negative, got {tau}")));
    }
    Mask::new(
        arrival.grid().clone(),
        arrival.values().iter().map(|&a| a < tau).collect(),
    )
}

/// A cell face separating a true node cell from a false neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub inside: usize,
    pub outside: usize,
    pub axis: usize,
    /// Direction of the inward normal along `axis`: `+1` or `-1`.
    pub sign: f64,
    pub center: Vec<f64>,
    pub area: f64,
}

impl Face {
    pub fn normal(&self, d: usize) -> Vec<f64> {
        let mut n = vec![0.0; d];
        n[self.axis] = self.sign;
        n
    }
}

/// Staircase boundary of the mask's true region, co-oriented inwards. Each
/// node owns the cube of side `h` centred on it; the box walls contribute no
/// faces.
pub fn boundary_faces(mask: &Mask) -> Result<Vec<Face>> {
    if mask.count() == 0 {
        return Err(Error::DegenerateMask("empty"));
    }
    let grid = mask.grid();
    let d = grid.dim();
    let strides = grid.strides();
    let area = grid.h().powi(d as i32 - 1);
    let mut faces = Vec::new();
    for idx in 0..grid.len() {
        if !mask.get(idx) {
            continue;
        }
        let multi = grid.multi_index(idx);
        for a in 0..d {
            let below = (multi[a] > 0).then(|| idx - strides[a]);
            let above = (multi[a] + 1 < grid.nodes()[a]).then(|| idx + strides[a]);
            for (nb, sign) in [(below, 1.0), (above, -1.0)] {
                let Some(nb) = nb else { continue };
                if mask.get(nb) {
                    continue;
                }
                let mut center = grid.position(idx);
                center[a] -= sign * 0.5 * grid.h();
                faces.push(Face {
                    inside: idx,
                    outside: nb,
                    axis: a,
                    sign,
                    center,
                    area,
                });
            }
        }
    }
    Ok(faces)
}
