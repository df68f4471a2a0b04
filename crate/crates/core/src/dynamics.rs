//! The controlled motion `x' = V(x) + alpha(t)` with `|alpha| <= b`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flowfield::{norm, VectorField, MAX_DIM};

/// Piecewise-constant control: `values[k]` is applied on
/// `[breakpoints[k], breakpoints[k + 1])`, the last value from its breakpoint on.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
    bound: f64,
}

impl ControlSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound <= 1.0) {
            return Err(Error::InvalidArgument(format!("control bound {bound} outside (0, 1]")));
        }
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidArgument(
                "one control value per breakpoint is required".into(),
            ));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        let d = values[0].len();
        for v in &values {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            if norm(v) > bound * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "control value with norm {} exceeds bound {bound}",
                    norm(v)
                )));
            }
        }
        Ok(Self {
            breakpoints,
            values,
            bound,
        })
    }

    pub fn constant(value: Vec<f64>, bound: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], bound)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim], 1.0).expect("zero control is valid")
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn piece(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.piece(t)]
    }

    /// Control `beta(s) = -alpha(t_end - s)` that retraces a trajectory of
    /// `alpha` backwards in the opposite field `-V`.
    pub fn time_reversed(&self, t_end: f64) -> Self {
        let mut ends: Vec<f64> = self.breakpoints.iter().skip(1).copied().collect();
        ends.push(f64::INFINITY);
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for k in (0..self.values.len()).rev() {
            let start = self.breakpoints[k];
            if start >= t_end {
                continue;
            }
            let end = ends[k].min(t_end);
            let s0 = t_end - end;
            if bps.last().map_or(true, |&b: &f64| s0 > b) {
                bps.push(s0);
                vals.push(self.values[k].iter().map(|v| -v).collect());
            }
        }
        if bps.is_empty() {
            return Self::zero(self.dim());
        }
        bps[0] = 0.0;
        Self {
            breakpoints: bps,
            values: vals,
            bound: self.bound,
        }
    }
}

/// Time-stamped states with the control active from each sample on.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub source: Vec<f64>,
    pub dt: f64,
    pub signal: ControlSignal,
}

impl Trajectory {
    pub fn end(&self) -> &[f64] {
        self.states.last().expect("trajectories are non-empty")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("trajectories are non-empty")
    }

    /// `t,x1,...,xd,a1,...,ad` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.source.len();
        let mut s = String::from("t");
        for k in 1..=d {
            write!(s, ",x{k}").unwrap();
        }
        for k in 1..=d {
            write!(s, ",a{k}").unwrap();
        }
        s.push('\n');
        for ((t, x), a) in self.times.iter().zip(&self.states).zip(&self.controls) {
            write!(s, "{t:.16e}").unwrap();
            for v in x.iter().chain(a) {
                write!(s, ",{v:.16e}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn rk4_step(field: &VectorField, x: &mut [f64], a: &[f64], dt: f64) {
    let d = x.len();
    let mut k1 = [0.0; MAX_DIM];
    let mut k2 = [0.0; MAX_DIM];
    let mut k3 = [0.0; MAX_DIM];
    let mut k4 = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    field.eval_into(x, &mut k1[..d]);
    for i in 0..d {
        k1[i] += a[i];
        y[i] = x[i] + 0.5 * dt * k1[i];
    }
    field.eval_into(&y[..d], &mut k2[..d]);
    for i in 0..d {
        k2[i] += a[i];
        y[i] = x[i] + 0.5 * dt * k2[i];
    }
    field.eval_into(&y[..d], &mut k3[..d]);
    for i in 0..d {
        k3[i] += a[i];
        y[i] = x[i] + dt * k3[i];
    }
    field.eval_into(&y[..d], &mut k4[..d]);
    for i in 0..d {
        k4[i] += a[i];
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Number and length of the equal steps covering a control piece of length
/// `remaining` with steps of at most `dt`.
pub(crate) fn piece_steps(remaining: f64, dt: f64) -> (usize, f64) {
    let n = (remaining / dt).ceil().max(1.0);
    (n as usize, remaining / n)
}

/// Classical RK4 from `x0` over `[0, t_end]`. Steps are at most `dt` long and
/// never straddle a control breakpoint.
pub fn integrate(
    field: &VectorField,
    x0: &[f64],
    control: &ControlSignal,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be non-negative, got {t_end}")));
    }
    let d = field.dim();
    if x0.len() != d || control.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if x0.len() != d { x0.len() } else { control.dim() },
        });
    }
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut controls = Vec::new();
    let bps = control.breakpoints();
    let mut piece = 0;
    while t < t_end {
        while piece + 1 < bps.len() && bps[piece + 1] <= t {
            piece += 1;
        }
        let next_bp = bps.get(piece + 1).copied().unwrap_or(f64::INFINITY);
        let target = next_bp.min(t_end);
        let (n, step) = piece_steps(target - t, dt);
        let a = &control.values()[piece];
        for i in 0..n {
            if !field.in_domain(&x) {
                return Err(Error::OutsideDomain(x));
            }
            rk4_step(field, &mut x, a, step);
            controls.push(a.clone());
            // Land exactly on the breakpoint to keep pieces aligned.
            t = if i + 1 == n { target } else { t + step };
            times.push(t);
            states.push(x.clone());
        }
    }
    controls.push(control.value_at(t).to_vec());
    Ok(Trajectory {
        times,
        states,
        controls,
        source: x0.to_vec(),
        dt,
        signal: control.clone(),
    })
}

/// Distance from the trajectory's end to `target`, and its duration.
pub fn replay_error(trajectory: &Trajectory, target: &[f64]) -> (f64, f64) {
    let e = trajectory.end();
    let dist = e
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (dist, trajectory.duration())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_in_still_water() {
        let f = VectorField::zero(2).unwrap();
        let c = ControlSignal::constant(vec![1.0, 0.0], 1.0).unwrap();
        let tr = integrate(&f, &[0.0, 0.0], &c, 1.0, 0.01).unwrap();
        let (dist, dur) = replay_error(&tr, &[1.0, 0.0]);
        assert!(dist <= 1e-12);
        assert_eq!(dur, 1.0);
    }

    #[test]
    fn drift_plus_control() {
        let f = VectorField::constant(&[0.5, 0.0]).unwrap();
        let c = ControlSignal::constant(vec![0.5, 0.0], 1.0).unwrap();
        let tr = integrate(&f, &[0.0, 0.0], &c, 2.0, 0.1).unwrap();
        assert!((tr.end()[0] - 2.0).abs() < 1e-12);
        assert!(tr.end()[1].abs() < 1e-12);
    }

    #[test]
    fn cell_center_stays_put() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let tr = integrate(&f, &[0.5, 0.5], &ControlSignal::zero(2), 1.0, 1e-3).unwrap();
        let (dist, _) = replay_error(&tr, &[0.5, 0.5]);
        assert!(dist < 1e-6);
    }

    #[test]
    fn steps_align_with_breakpoints() {
        let c = ControlSignal::new(
            vec![0.0, 0.3, 0.55],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, 0.0]],
            1.0,
        )
        .unwrap();
        let f = VectorField::zero(2).unwrap();
        let tr = integrate(&f, &[0.0, 0.0], &c, 1.0, 0.1).unwrap();
        assert!(tr.times.contains(&0.3));
        assert!(tr.times.contains(&0.55));
        let e = tr.end();
        assert!((e[0] - (0.3 - 0.5 * 0.45)).abs() < 1e-12);
        assert!((e[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_controls() {
        assert!(ControlSignal::constant(vec![1.0, 1.0], 1.0).is_err());
        assert!(ControlSignal::constant(vec![0.6, 0.0], 0.5).is_err());
        assert!(ControlSignal::new(vec![0.0, 0.0], vec![vec![0.0; 2]; 2], 1.0).is_err());
        assert!(ControlSignal::new(vec![0.1], vec![vec![0.0; 2]], 1.0).is_err());
    }

    fn endpoint_error(f: &VectorField, dt: f64) -> f64 {
        let c = ControlSignal::constant(vec![0.6, -0.8], 1.0).unwrap();
        let x0 = [0.2, 0.3];
        let coarse = integrate(f, &x0, &c, 0.5, dt).unwrap();
        let reference = integrate(f, &x0, &c, 0.5, dt / 64.0).unwrap();
        let (e, _) = replay_error(&coarse, reference.end());
        e
    }

    #[test]
    fn fourth_order_convergence() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let ratio = endpoint_error(&f, 0.02) / endpoint_error(&f, 0.01);
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn speed_is_bounded() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let c = ControlSignal::constant(vec![0.0, 1.0], 1.0).unwrap();
        let tr = integrate(&f, &[0.1, 0.2], &c, 2.0, 1e-3).unwrap();
        for w in 0..tr.times.len() - 1 {
            let dt = tr.times[w + 1] - tr.times[w];
            let dx = norm(
                &tr.states[w + 1]
                    .iter()
                    .zip(&tr.states[w])
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            assert!(dx / dt <= 10.0 + 1.0 + 1e-6);
        }
    }

    #[test]
    fn reversal_in_opposite_field_returns_home() {
        let f = VectorField::cellular(10.0, 1.0, 2).unwrap();
        let c = ControlSignal::new(
            vec![0.0, 0.2, 0.45],
            vec![vec![1.0, 0.0], vec![0.0, -1.0], vec![0.6, 0.8]],
            1.0,
        )
        .unwrap();
        let x0 = [0.13, 0.71];
        let t_end = 0.8;
        let dt = 1e-3;
        let fwd = integrate(&f, &x0, &c, t_end, dt).unwrap();
        let back = integrate(&f.negated(), fwd.end(), &c.time_reversed(t_end), t_end, dt).unwrap();
        let (dist, _) = replay_error(&back, &x0);
        assert!(dist < 1e-8, "dist {dist}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = VectorField::zero(2).unwrap();
        let c = ControlSignal::constant(vec![1.0, 0.0], 1.0).unwrap();
        let tr = integrate(&f, &[0.0, 0.0], &c, 0.5, 0.25).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,a1,a2"));
        let row: Vec<f64> = lines
            .nth(2)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.5, 0.5, 0.0, 1.0, 0.0]);
    }
}
