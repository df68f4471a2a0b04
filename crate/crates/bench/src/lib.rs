//! Shared fixtures for the solver benchmarks.

use reachflow::{Grid, VectorField};

/// The strong cellular flow used throughout the acceptance suite.
pub fn cellular() -> VectorField {
    VectorField::cellular(10.0, 1.0, 2).expect("valid cellular parameters")
}

/// Square grid `[0, side]^2` with `cells` cells per axis.
pub fn square(side: f64, cells: usize) -> Grid {
    Grid::new(&[0.0, 0.0], &[side, side], &[cells, cells]).expect("valid grid")
}
