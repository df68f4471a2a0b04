//! Uniform Cartesian grids and per-node scalar fields.
//!
//! Nodes sit at `min + i * h` along every axis and are stored row-major with
//! the last axis varying fastest. Every node position in the crate is computed
//! through [`Grid::coord`], so shifting a grid by an exactly representable
//! offset shifts every node exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `(max - min) / cells` agreeing across axes.
const SPACING_TOL: f64 = 1e-12;

/// Minimum number of cells per axis for solver grids.
pub const MIN_CELLS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    min: Vec<f64>,
    nodes: Vec<usize>,
    h: f64,
}

impl Grid {
    /// Builds a solver grid over the box `[min, max]` with `cells[k]` cells
    /// along axis `k`. The spacing must agree across axes.
    pub fn new(min: &[f64], max: &[f64], cells: &[usize]) -> Result<Self> {
        let d = min.len();
        if d < 2 || max.len() != d || cells.len() != d {
            return Err(Error::InvalidGrid(format!(
                "min/max/cells must share a dimension >= 2 (got {}, {}, {})",
                d,
                max.len(),
                cells.len()
            )));
        }
        if let Some(c) = cells.iter().find(|&&c| c < MIN_CELLS) {
            return Err(Error::InvalidGrid(format!(
                "at least {MIN_CELLS} cells per axis required, got {c}"
            )));
        }
        let h = (max[0] - min[0]) / cells[0] as f64;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("non-positive spacing {h}")));
        }
        for k in 1..d {
            let hk = (max[k] - min[k]) / cells[k] as f64;
            if (hk - h).abs() > SPACING_TOL * h.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "spacing differs across axes: {h} vs {hk} on axis {k}"
                )));
            }
        }
        Ok(Self {
            min: min.to_vec(),
            nodes: cells.iter().map(|c| c + 1).collect(),
            h,
        })
    }

    /// Builds a grid from node counts and spacing without the solver-size
    /// check. Used when reading persisted fields.
    pub fn from_nodes(min: &[f64], nodes: &[usize], h: f64) -> Result<Self> {
        if min.len() != nodes.len() || min.is_empty() {
            return Err(Error::InvalidGrid("min and node counts differ in length".into()));
        }
        if nodes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid("zero node count".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("non-positive spacing {h}")));
        }
        Ok(Self {
            min: min.to_vec(),
            nodes: nodes.to_vec(),
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self, axis: usize) -> f64 {
        self.coord(axis, self.nodes[axis] - 1)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same grid shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            min: self.min.iter().zip(offset).map(|(m, o)| m + o).collect(),
            nodes: self.nodes.clone(),
            h: self.h,
        }
    }

    /// Same box refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            min: self.min.clone(),
            nodes: self.nodes.iter().map(|n| (n - 1) * factor + 1).collect(),
            h: self.h / factor as f64,
        }
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for k in (0..d - 1).rev() {
            s[k] = s[k + 1] * self.nodes[k + 1];
        }
        s
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.min[axis] + i as f64 * self.h
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.nodes)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            m[k] = idx % self.nodes[k];
            idx /= self.nodes[k];
        }
        m
    }

    pub fn position_into(&self, idx: usize, out: &mut [f64]) {
        let mut idx = idx;
        for k in (0..self.dim()).rev() {
            out[k] = self.coord(k, idx % self.nodes[k]);
            idx /= self.nodes[k];
        }
    }

    pub fn position(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.position_into(idx, &mut p);
        p
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && (0..self.dim()).all(|k| p[k] >= self.min[k] && p[k] <= self.max(k))
    }

    /// Distance from `p` to the nearest face of the box (negative outside).
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| (p[k] - self.min[k]).min(self.max(k) - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the node at `p` if `p` lies on a node within `tol * h`.
    pub fn node_at(&self, p: &[f64], tol: f64) -> Option<usize> {
        let idx = self.nearest_node(p)?;
        let q = self.position(idx);
        let off = q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (off <= tol * self.h).then_some(idx)
    }

    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let i = ((p[k] - self.min[k]) / self.h).round() as usize;
                i.min(self.nodes[k] - 1)
            })
            .collect();
        Some(self.index(&multi))
    }

    /// Nodes lying at least `band` away from every face of the box.
    pub fn trusted(&self, idx: usize, band: f64) -> bool {
        let m = self.multi_index(idx);
        let cells = (band / self.h - 1e-9).ceil() as usize;
        m.iter()
            .zip(&self.nodes)
            .all(|(&i, &n)| i >= cells && i + cells < n)
    }

    /// Lower corner of the cell containing `p` and the fractional offsets
    /// inside it, for multilinear interpolation.
    pub fn locate(&self, p: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        if !self.contains(p) {
            return None;
        }
        let mut base = Vec::with_capacity(self.dim());
        let mut frac = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let s = (p[k] - self.min[k]) / self.h;
            let last = self.nodes[k].saturating_sub(2);
            let i = (s.floor().max(0.0) as usize).min(last);
            base.push(i);
            frac.push(if self.nodes[k] == 1 { 0.0 } else { s - i as f64 });
        }
        Some((base, frac))
    }
}

/// One scalar per grid node; `+inf` marks unreached nodes in arrival fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGridField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarGridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Value at the node nearest `p`.
    pub fn at(&self, p: &[f64]) -> Option<f64> {
        self.grid.nearest_node(p).map(|i| self.values[i])
    }

    /// Multilinear interpolation; infinite if any corner is infinite.
    pub fn interpolate(&self, p: &[f64]) -> Option<f64> {
        let (base, frac) = self.grid.locate(p)?;
        let d = self.grid.dim();
        let strides = self.grid.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                let i = if up && self.grid.nodes[k] > 1 { base[k] + 1 } else { base[k] };
                idx += i * strides[k];
                w *= if up { frac[k] } else { 1.0 - frac[k] };
            }
            if w == 0.0 {
                continue;
            }
            let v = self.values[idx];
            if v.is_infinite() {
                return Some(f64::INFINITY);
            }
            acc += w * v;
        }
        Some(acc)
    }

    pub fn count_finite(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    /// Largest finite value, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_must_agree() {
        assert!(Grid::new(&[0.0, 0.0], &[1.0, 2.0], &[8, 8]).is_err());
        let g = Grid::new(&[0.0, 0.0], &[1.0, 2.0], &[8, 16]).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_eq!(g.nodes(), &[9, 17]);
        assert_eq!(g.max(1), 2.0);
    }

    #[test]
    fn too_few_cells_rejected() {
        assert!(Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(&[0.0, 0.0, 0.0], &[1.0, 1.0, 2.0], &[8, 8, 16]).unwrap();
        for idx in [0, 17, 400, g.len() - 1] {
            assert_eq!(g.index(&g.multi_index(idx)), idx);
        }
        let p = g.position(g.index(&[1, 2, 3]));
        assert_eq!(p, vec![0.125, 0.25, 0.375]);
    }

    #[test]
    fn interpolation_is_exact_for_linear_data() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let vals = (0..g.len())
            .map(|i| {
                let p = g.position(i);
                2.0 * p[0] - p[1] + 0.5
            })
            .collect();
        let f = ScalarGridField::new(g, vals).unwrap();
        let v = f.interpolate(&[0.33, 0.71]).unwrap();
        assert!((v - (0.66 - 0.71 + 0.5)).abs() < 1e-12);
        assert_eq!(f.interpolate(&[1.0, 1.0]).unwrap(), 2.0 - 1.0 + 0.5);
    }

    #[test]
    fn trusted_band() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let band = 4.0 * g.h();
        assert!(!g.trusted(g.index(&[3, 8]), band));
        assert!(g.trusted(g.index(&[4, 8]), band));
        assert!(!g.trusted(g.index(&[8, 13]), band));
    }
}
