use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PAIRS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TravelSample {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub tau: f64,
}

impl TravelSample {
    pub fn separation(&self) -> f64 {
        self.from
            .iter()
            .zip(&self.to)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Linear upper envelope `tau <= c1 * |x - y| + c2` of sampled travel times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeFit {
    pub c1: f64,
    pub c2: f64,
    /// Largest gap between the envelope and a sample.
    pub max_residual: f64,
    pub mean_separation: f64,
    pub min_separation: f64,
    pub max_separation: f64,
    pub samples: Vec<TravelSample>,
}

impl TravelTimeFit {
    pub fn bound(&self, separation: f64) -> f64 {
        self.c1 * separation + self.c2
    }

    /// Whether every sample lies on or below the envelope.
    pub fn covers_samples(&self) -> bool {
        self.samples.iter().all(|s| s.tau <= self.bound(s.separation()))
    }
}

/// The tightest line above all samples, in the sense of the smallest mean
/// height over the sampled separations: the supporting line of the upper
/// convex hull at the mean separation. At a hull vertex the flatter of the
/// two adjacent edges is used.
///
/// Every travel time must be finite; the first infinite one is reported.
pub fn fit_travel_times(samples: Vec<TravelSample>) -> Result<TravelTimeFit> {
    if samples.len() < MIN_PAIRS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_PAIRS} pairs required, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| !s.tau.is_finite()) {
        return Err(Error::InfiniteTravelTime {
            from: s.from.clone(),
            to: s.to.clone(),
        });
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.separation(), s.tau)).collect();
    let mean = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let hull = upper_hull(&pts);
    let c1 = hull
        .windows(2)
        .find(|e| e[1].0 > mean)
        .map(|e| (e[1].1 - e[0].1) / (e[1].0 - e[0].0))
        .unwrap_or(0.0);
    let mut c2 = pts.iter().map(|&(d, t)| t - c1 * d).fold(f64::NEG_INFINITY, f64::max);
    // Rounding may leave a sample a hair above the line.
    while pts.iter().any(|&(d, t)| t > c1 * d + c2) {
        c2 = c2.next_up();
    }
    let max_residual = pts.iter().map(|&(d, t)| c1 * d + c2 - t).fold(0.0, f64::max);
    Ok(TravelTimeFit {
        c1,
        c2,
        max_residual,
        mean_separation: mean,
        min_separation: pts[0].0,
        max_separation: pts[pts.len() - 1].0,
        samples,
    })
}

/// Upper convex hull of points sorted by abscissa, left to right. Points with
/// equal abscissa keep only the highest.
fn upper_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts {
        if let Some(last) = hull.last() {
            if last.0 == p.0 {
                hull.pop();
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(d: f64, tau: f64) -> TravelSample {
        TravelSample {
            from: vec![0.0, 0.0],
            to: vec![d, 0.0],
            tau,
        }
    }

    #[test]
    fn exact_line_is_recovered() {
        let s: Vec<_> = (1..=40).map(|i| sample(i as f64 * 0.1, 2.0 * i as f64 * 0.1 + 0.5)).collect();
        let fit = fit_travel_times(s).unwrap();
        assert!((fit.c1 - 2.0).abs() < 1e-12);
        assert!((fit.c2 - 0.5).abs() < 1e-12);
        assert!(fit.max_residual < 1e-12);
    }

    #[test]
    fn envelope_sits_on_the_upper_hull() {
        // Upper points on tau = d, lower points scattered below.
        let mut s = Vec::new();
        for i in 1..=20 {
            let d = i as f64 * 0.2;
            s.push(sample(d, d));
            s.push(sample(d, 0.5 * d));
        }
        let fit = fit_travel_times(s).unwrap();
        assert!((fit.c1 - 1.0).abs() < 1e-12);
        assert!(fit.c2.abs() < 1e-12);
        assert!(fit.covers_samples());
    }

    #[test]
    fn infinite_time_is_reported() {
        let mut s: Vec<_> = (1..=40).map(|i| sample(i as f64, i as f64)).collect();
        s[7].tau = f64::INFINITY;
        match fit_travel_times(s) {
            Err(Error::InfiniteTravelTime { to, .. }) => assert_eq!(to, vec![8.0, 0.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_pairs() {
        let s: Vec<_> = (1..=10).map(|i| sample(i as f64, i as f64)).collect();
        assert!(fit_travel_times(s).is_err());
    }

    proptest! {
        #[test]
        fn envelope_covers_its_samples(pts in proptest::collection::vec((0.01f64..10.0, 0.0f64..50.0), 30..120)) {
            let s: Vec<_> = pts.iter().map(|&(d, t)| sample(d, t)).collect();
            let fit = fit_travel_times(s).unwrap();
            prop_assert!(fit.covers_samples());
            prop_assert!(fit.max_residual >= 0.0);
        }
    }
}
