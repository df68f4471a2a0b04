//! Sign function convolved with the standard bump kernel.
//!
//! The kernel is `exp(-1 / (1 - u^2))` on `|u| < 1`, normalized to unit mass
//! and scaled to radius `rho`. The convolution `sign * kernel` equals
//! `2 F(t / rho) - 1` where `F` is the kernel's cumulative distribution, which
//! is tabulated once on `[-1, 1]` and interpolated linearly.

use std::sync::OnceLock;

/// Number of table intervals on `[-1, 1]`.
const TABLE_INTERVALS: usize = 2048;
/// Simpson sub-intervals per table interval when integrating the kernel.
const SUBSTEPS: usize = 16;

fn bump(u: f64) -> f64 {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let du = 2.0 / TABLE_INTERVALS as f64;
        let mut cdf = vec![0.0; TABLE_INTERVALS + 1];
        for i in 0..TABLE_INTERVALS {
            let a = -1.0 + i as f64 * du;
            let sub = du / SUBSTEPS as f64;
            let mut s = 0.0;
            for j in 0..SUBSTEPS {
                let x0 = a + j as f64 * sub;
                s += sub / 6.0 * (bump(x0) + 4.0 * bump(x0 + 0.5 * sub) + bump(x0 + sub));
            }
            cdf[i + 1] = cdf[i] + s;
        }
        let mass = cdf[TABLE_INTERVALS];
        let raw: Vec<f64> = cdf.iter().map(|c| 2.0 * c / mass - 1.0).collect();
        // Exact odd symmetry so that the profile has zero mean over symmetric intervals.
        (0..=TABLE_INTERVALS)
            .map(|i| 0.5 * (raw[i] - raw[TABLE_INTERVALS - i]))
            .collect()
    })
}

/// `sign` mollified at radius `rho`; odd, monotone, equal to `±1` for `|t| >= rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothSign {
    rho: f64,
}

impl SmoothSign {
    pub fn new(rho: f64) -> Self {
        Self { rho }
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let a = t.abs();
        if a >= self.rho {
            return t.signum();
        }
        let tab = table();
        let s = (a / self.rho + 1.0) * 0.5 * TABLE_INTERVALS as f64;
        let i = (s.floor() as usize).min(TABLE_INTERVALS - 1);
        let f = s - i as f64;
        let v = tab[i] * (1.0 - f) + tab[i + 1] * f;
        if t < 0.0 {
            -v
        } else {
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturates_and_is_odd() {
        let s = SmoothSign::new(0.5);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(3.0), 1.0);
        assert_eq!(s.eval(-0.7), -1.0);
        assert_eq!(s.eval(0.0), 0.0);
        for t in [0.01, 0.1, 0.2, 0.37, 0.49] {
            assert_eq!(s.eval(t), -s.eval(-t));
        }
    }

    #[test]
    fn monotone_and_continuous_at_edges() {
        let s = SmoothSign::new(1.0);
        let mut prev = -1.0;
        for i in 0..=4000 {
            let t = -1.0 + i as f64 * 0.0005;
            let v = s.eval(t);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert!((s.eval(0.999) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_direct_quadrature() {
        // Independent check: integrate the kernel with a plain midpoint rule.
        let n = 200_000;
        let du = 2.0 / n as f64;
        let w: Vec<f64> = (0..n).map(|i| bump(-1.0 + (i as f64 + 0.5) * du)).collect();
        let mass: f64 = w.iter().sum();
        let s = SmoothSign::new(1.0);
        for t in [-0.6, -0.2, 0.1, 0.45, 0.8] {
            let below: f64 = (0..n)
                .filter(|&i| -1.0 + (i as f64 + 0.5) * du < t)
                .map(|i| w[i])
                .sum();
            let expect = 2.0 * below / mass - 1.0;
            assert!((s.eval(t) - expect).abs() < 1e-4, "t={t}: {} vs {expect}", s.eval(t));
        }
    }
}
