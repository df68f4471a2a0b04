//! Travel times by shortest paths on a lattice graph.
//!
//! Each node connects to every node within `L∞` distance `k` whose offset has
//! coprime components. An edge is traversed in a straight line: the flow is
//! sampled once at the edge midpoint, and the swimmer steers so that the net
//! velocity points along the edge. Edges that cannot be swum that way are
//! left out, so regions the swimmer cannot leave stay disconnected exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::flowfield::{VectorField, MAX_DIM};
use crate::grid::{Grid, ScalarGridField};

pub const MAX_STENCIL: usize = 4;

/// Time to travel in a straight line from `a` to `b` at full control, with
/// the flow frozen at the midpoint. `None` when the flow across the segment is
/// too strong to hold the line, or when the midpoint lies outside the field's
/// domain.
pub fn edge_time(field: &VectorField, a: &[f64], b: &[f64]) -> Option<f64> {
    let d = a.len();
    let mut mid = [0.0; MAX_DIM];
    let mut e = [0.0; MAX_DIM];
    for i in 0..d {
        mid[i] = 0.5 * (a[i] + b[i]);
        e[i] = b[i] - a[i];
    }
    let len = e[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
    if len == 0.0 || !field.in_domain(&mid[..d]) {
        return None;
    }
    let mut v = [0.0; MAX_DIM];
    field.eval_into(&mid[..d], &mut v[..d]);
    along(&v[..d], &e[..d], len)
}

/// Straight-line time along `e` (length `len`) in the uniform flow `v`.
#[inline]
fn along(v: &[f64], e: &[f64], len: f64) -> Option<f64> {
    let par = v.iter().zip(e).map(|(v, e)| v * e).sum::<f64>() / len;
    let perp2 = (v.iter().map(|v| v * v).sum::<f64>() - par * par).max(0.0);
    if perp2 > 1.0 {
        return None;
    }
    let s = par + (1.0 - perp2).sqrt();
    (s > 0.0).then(|| len / s)
}

/// The lattice graph for one grid and stencil radius.
#[derive(Clone, Debug)]
pub struct StencilGraph {
    grid: Grid,
    k: usize,
    offsets: Vec<Vec<isize>>,
    linear: Vec<isize>,
}

impl StencilGraph {
    pub fn new(grid: &Grid, k: usize) -> Result<Self> {
        if !(1..=MAX_STENCIL).contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "stencil radius must be in [1, {MAX_STENCIL}], got {k}"
            )));
        }
        let d = grid.dim();
        let strides = grid.strides();
        let side = 2 * k + 1;
        let mut offsets = Vec::new();
        for code in 0..side.pow(d as u32) {
            let mut c = code;
            let off: Vec<isize> = (0..d)
                .map(|_| {
                    let o = (c % side) as isize - k as isize;
                    c /= side;
                    o
                })
                .collect();
            let g = off.iter().fold(0usize, |g, &o| gcd(g, o.unsigned_abs()));
            if g == 1 {
                offsets.push(off);
            }
        }
        let linear = offsets
            .iter()
            .map(|o| o.iter().zip(&strides).map(|(o, s)| o * *s as isize).sum())
            .collect();
        Ok(Self {
            grid: grid.clone(),
            k,
            offsets,
            linear,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn radius(&self) -> usize {
        self.k
    }

    /// Integer offsets of the stencil, each with coprime components.
    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    /// Nodes adjacent to `idx` (those inside the grid).
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let m = self.grid.multi_index(idx);
        let mut out = Vec::new();
        self.for_each_neighbor(&m, idx, |j, _| out.push(j));
        out
    }

    fn for_each_neighbor(&self, m: &[usize], idx: usize, mut f: impl FnMut(usize, &[isize])) {
        let nodes = self.grid.nodes();
        'outer: for (off, lin) in self.offsets.iter().zip(&self.linear) {
            for ((&mi, &o), &n) in m.iter().zip(off).zip(nodes) {
                let j = mi as isize + o;
                if j < 0 || j >= n as isize {
                    continue 'outer;
                }
            }
            f((idx as isize + lin) as usize, off);
        }
    }

    /// Traversal time of the edge from node `i` to node `j`.
    pub fn edge(&self, field: &VectorField, i: usize, j: usize) -> Option<f64> {
        edge_time(field, &self.grid.position(i), &self.grid.position(j))
    }

    /// Single-source shortest-path times from node `source`.
    pub fn shortest_times(&self, field: &VectorField, source: usize) -> Result<ScalarGridField> {
        let grid = &self.grid;
        if field.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: field.dim(),
            });
        }
        if source >= grid.len() {
            return Err(Error::InvalidArgument(format!("source node {source} out of range")));
        }
        let d = grid.dim();
        let h = grid.h();
        let mut time = vec![f64::INFINITY; grid.len()];
        let mut done = vec![false; grid.len()];
        let mut heap = BinaryHeap::new();
        time[source] = 0.0;
        heap.push(Entry { t: 0.0, idx: source });
        let mut m = vec![0usize; d];
        let mut x = [0.0; MAX_DIM];
        let mut mid = [0.0; MAX_DIM];
        let mut e = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        while let Some(Entry { t, idx }) = heap.pop() {
            if done[idx] {
                continue;
            }
            done[idx] = true;
            let mut rest = idx;
            for k in (0..d).rev() {
                m[k] = rest % grid.nodes()[k];
                rest /= grid.nodes()[k];
            }
            grid.position_into(idx, &mut x[..d]);
            self.for_each_neighbor(&m, idx, |j, off| {
                if done[j] {
                    return;
                }
                for k in 0..d {
                    e[k] = off[k] as f64 * h;
                    mid[k] = x[k] + 0.5 * e[k];
                }
                if !field.in_domain(&mid[..d]) {
                    return;
                }
                field.eval_into(&mid[..d], &mut v[..d]);
                let len = e[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
                if let Some(w) = along(&v[..d], &e[..d], len) {
                    let nt = t + w;
                    if nt < time[j] {
                        time[j] = nt;
                        heap.push(Entry { t: nt, idx: j });
                    }
                }
            });
        }
        ScalarGridField::new(grid.clone(), time)
    }
}

/// Shortest-path travel times from `source`, which must be a grid node.
pub fn dijkstra_times(
    field: &VectorField,
    grid: &Grid,
    source: &[f64],
    k: usize,
) -> Result<ScalarGridField> {
    let graph = StencilGraph::new(grid, k)?;
    let node = grid
        .node_at(source, 1e-9 * grid.h())
        .ok_or_else(|| Error::SourceOutsideGrid(source.to_vec()))?;
    graph.shortest_times(field, node)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Heap entry ordered so that the smallest time pops first, ties going to the
/// lower node index.
#[derive(Clone, Copy, Debug)]
struct Entry {
    t: f64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}
