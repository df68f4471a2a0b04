//! Fluxes through cube faces and reachable-set boundaries, linear envelopes
//! of travel times, and trapping checks on arrival fields.

mod fit;
mod flux;
mod trap;

pub use fit::{fit_travel_times, TravelSample, TravelTimeFit, MIN_PAIRS};
pub use flux::{
    boundary_flux_check, closed_cube_flux, cube_faces, flux_cube_face, CubeFace, FaceStats,
    FluxReport, BOUNDARY_TOLERANCE,
};
pub use trap::{trapping_check, Region, TrapReport};

/// Pairwise summation, deterministic for a given input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Linearly interpolated quantile of sorted data, `p` in `[0, 1]`.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    Some(sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 0.5), Some(3.0));
        assert_eq!(quantile(&v, 0.1), Some(1.4));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn pairwise_sum_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
