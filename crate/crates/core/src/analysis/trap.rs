use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarGridField;

/// Axis-aligned region with optional bounds per axis, e.g. `{x1 >= a, x2 >= b}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(default)]
    pub lower: Vec<Option<f64>>,
    #[serde(default)]
    pub upper: Vec<Option<f64>>,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        let above = self
            .lower
            .iter()
            .zip(x)
            .all(|(b, v)| b.map_or(true, |b| *v >= b));
        let below = self
            .upper
            .iter()
            .zip(x)
            .all(|(b, v)| b.map_or(true, |b| *v <= b));
        above && below
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub passed: bool,
    pub inside_nodes: usize,
    pub inside_finite: usize,
    pub outside_nodes: usize,
    pub outside_finite: usize,
    /// An outside node with finite arrival, if any.
    pub witness: Option<Vec<f64>>,
    pub witness_arrival: Option<f64>,
}

/// Checks that nothing outside `region` was reached while something inside
/// was.
pub fn trapping_check(arrival: &ScalarGridField, region: impl Fn(&[f64]) -> bool) -> Result<TrapReport> {
    let grid = arrival.grid();
    let mut x = vec![0.0; grid.dim()];
    let (mut inside, mut inside_finite, mut outside, mut outside_finite) = (0, 0, 0, 0);
    let mut witness: Option<(Vec<f64>, f64)> = None;
    for (idx, &t) in arrival.values().iter().enumerate() {
        grid.position_into(idx, &mut x);
        if region(&x) {
            inside += 1;
            inside_finite += t.is_finite() as usize;
        } else {
            outside += 1;
            if t.is_finite() {
                outside_finite += 1;
                if witness.as_ref().map_or(true, |w| t < w.1) {
                    witness = Some((x.clone(), t));
                }
            }
        }
    }
    if inside == 0 {
        return Err(Error::RegionClipsGrid("misses"));
    }
    if outside == 0 {
        return Err(Error::RegionClipsGrid("covers"));
    }
    Ok(TrapReport {
        passed: outside_finite == 0 && inside_finite > 0,
        inside_nodes: inside,
        inside_finite,
        outside_nodes: outside,
        outside_finite,
        witness_arrival: witness.as_ref().map(|w| w.1),
        witness: witness.map(|w| w.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn field(f: impl Fn(&[f64]) -> f64) -> ScalarGridField {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let v = (0..g.len()).map(|i| f(&g.position(i))).collect();
        ScalarGridField::new(g, v).unwrap()
    }

    #[test]
    fn region_bounds() {
        let r = Region {
            lower: vec![Some(1.0), None],
            upper: vec![None, Some(2.0)],
        };
        assert!(r.contains(&[1.0, -5.0]));
        assert!(!r.contains(&[0.9, 0.0]));
        assert!(!r.contains(&[3.0, 2.5]));
    }

    #[test]
    fn sealed_region_passes() {
        let a = field(|p| if p[0] >= 0.5 { p[0] } else { f64::INFINITY });
        let r = trapping_check(&a, |p| p[0] >= 0.5).unwrap();
        assert!(r.passed);
        assert_eq!(r.witness, None);
    }

    #[test]
    fn leak_is_witnessed() {
        let a = field(|p| if p[0] >= 0.25 { p[0] } else { f64::INFINITY });
        let r = trapping_check(&a, |p| p[0] >= 0.5).unwrap();
        assert!(!r.passed);
        assert_eq!(r.witness.unwrap()[0], 0.25);
        assert_eq!(r.outside_finite, 9 * 2);
    }

    #[test]
    fn nothing_reached_fails() {
        let a = field(|_| f64::INFINITY);
        assert!(!trapping_check(&a, |p| p[0] >= 0.5).unwrap().passed);
    }

    #[test]
    fn clipping_regions_rejected() {
        let a = field(|_| 1.0);
        assert!(trapping_check(&a, |_| true).is_err());
        assert!(trapping_check(&a, |_| false).is_err());
    }
}
