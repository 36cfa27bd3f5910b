//! 2D slices of a functional and marching-squares isocontours on them.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::pca::{Alpha, COMPONENTS};
use crate::rbf::RbfModel;

/// A rectangle through coefficient space: dimensions `dims.0` and `dims.1`
/// (0-based) vary over `bounds`, the others take their value from `fixed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub dims: (usize, usize),
    /// Full coefficient vector; entries at the free dims are ignored.
    pub fixed: Alpha,
    pub bounds: [(f64, f64); 2],
    /// Grid nodes along each free dim.
    pub resolution: usize,
}

impl SliceSpec {
    pub fn validate(&self) -> Result<()> {
        let (i, j) = self.dims;
        if i == j || i >= COMPONENTS || j >= COMPONENTS {
            return Err(argument(format!("free dims must be two distinct values in 0..{COMPONENTS}")));
        }
        if self.resolution < 2 {
            return Err(argument("slice resolution must be at least 2"));
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(argument("slice bounds must be finite with lo < hi"));
        }
        Ok(())
    }

    /// Coordinate of node `k` along free dim `d` (0 or 1).
    pub fn coordinate(&self, d: usize, k: usize) -> f64 {
        let (lo, hi) = self.bounds[d];
        lo + (hi - lo) * k as f64 / (self.resolution - 1) as f64
    }

    /// Cell size along free dim `d`.
    pub fn spacing(&self, d: usize) -> f64 {
        let (lo, hi) = self.bounds[d];
        (hi - lo) / (self.resolution - 1) as f64
    }

    /// Full coefficient vector at slice-plane point `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> Alpha {
        let mut a = self.fixed;
        a[self.dims.0] = u;
        a[self.dims.1] = v;
        a
    }
}

/// Values at the grid nodes. `values[row][col]`: the row index walks the
/// second free dim and the column index the first, both ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub spec: SliceSpec,
    pub values: Vec<Vec<f64>>,
}

impl SliceGrid {
    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Evaluates raw model output at every grid node.
pub fn slice(model: &RbfModel, spec: &SliceSpec) -> Result<SliceGrid> {
    spec.validate()?;
    let n = spec.resolution;
    let values = (0..n)
        .into_par_iter()
        .map(|row| {
            let v = spec.coordinate(1, row);
            (0..n).map(|col| model.eval_raw(&spec.point(spec.coordinate(0, col), v))).collect()
        })
        .collect();
    Ok(SliceGrid { spec: spec.clone(), values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// Points in slice-plane coordinates (first free dim, second free dim).
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

/// Grid edge identifier: horizontal edges run from node (row, col) to
/// (row, col+1), vertical ones from (row, col) to (row+1, col).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Level-`level` contours of the model over the slice. Crossing points are
/// placed by linear interpolation along grid edges, then refined by one
/// false-position step against the model. A level outside the grid's value
/// range yields no polylines.
pub fn isocontour(model: &RbfModel, spec: &SliceSpec, level: f64) -> Result<Vec<Polyline>> {
    let grid = slice(model, spec)?;
    let (lo, hi) = grid.min_max();
    if !(level >= lo && level <= hi) {
        return Ok(Vec::new());
    }
    let n = spec.resolution;
    let f = &grid.values;
    let above = |r: usize, c: usize| f[r][c] > level;

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            // Corners counter-clockwise from (r, c): bottom-left, bottom-right,
            // top-right, top-left, with "top" meaning row r+1.
            let case = (above(r, c) as u8)
                | (above(r, c + 1) as u8) << 1
                | (above(r + 1, c + 1) as u8) << 2
                | (above(r + 1, c) as u8) << 3;
            let bottom = Edge::H(r, c);
            let right = Edge::V(r, c + 1);
            let top = Edge::H(r + 1, c);
            let left = Edge::V(r, c);
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    let centre = (f[r][c] + f[r][c + 1] + f[r + 1][c + 1] + f[r + 1][c]) / 4.0;
                    // The centre value decides which diagonal pair of
                    // corners is connected; the other pair is cut off.
                    let cut_br_tl = (centre > level) == (case == 5);
                    if cut_br_tl {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut vertex: HashMap<Edge, [f64; 2]> = HashMap::new();
    for &(a, b) in &segments {
        for e in [a, b] {
            vertex.entry(e).or_insert_with(|| crossing(model, spec, f, e, level));
        }
    }
    Ok(stitch(&segments).into_iter().map(|(edges, closed)| Polyline {
        points: edges.iter().map(|e| vertex[e]).collect(),
        closed,
    }).collect())
}

fn crossing(model: &RbfModel, spec: &SliceSpec, f: &[Vec<f64>], edge: Edge, level: f64) -> [f64; 2] {
    let ((r0, c0), (r1, c1)) = match edge {
        Edge::H(r, c) => ((r, c), (r, c + 1)),
        Edge::V(r, c) => ((r, c), (r + 1, c)),
    };
    let p0 = [spec.coordinate(0, c0), spec.coordinate(1, r0)];
    let p1 = [spec.coordinate(0, c1), spec.coordinate(1, r1)];
    let (f0, f1) = (f[r0][c0] - level, f[r1][c1] - level);
    let lerp = |t: f64| [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
    let t = if f0 == f1 { 0.5 } else { (f0 / (f0 - f1)).clamp(0.0, 1.0) };
    // One false-position step on the bracketing sub-interval.
    let ft = model.eval_raw(&spec.point(lerp(t)[0], lerp(t)[1])) - level;
    let refined = if ft == 0.0 {
        t
    } else if (ft > 0.0) == (f0 > 0.0) {
        t + (1.0 - t) * ft / (ft - f1)
    } else {
        t * f0 / (f0 - ft)
    };
    let refined = if refined.is_finite() { refined.clamp(0.0, 1.0) } else { t };
    lerp(refined)
}

/// Joins segments sharing edges into chains; returns each chain's edge
/// sequence and whether it closes.
fn stitch(segments: &[(Edge, Edge)]) -> Vec<(Vec<Edge>, bool)> {
    let mut adj: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        adj.entry(a).or_default().push(i);
        adj.entry(b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let other = |i: usize, e: Edge| if segments[i].0 == e { segments[i].1 } else { segments[i].0 };
    let next_unused = |used: &[bool], e: Edge| adj[&e].iter().copied().find(|&i| !used[i]);

    // Open chains start at edges touched by a single segment (the slice
    // boundary); whatever remains afterwards is a loop.
    let mut starts: Vec<(usize, Edge)> = Vec::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        for e in [a, b] {
            if adj[&e].len() == 1 {
                starts.push((i, e));
            }
        }
    }
    let walk = |used: &mut Vec<bool>, first: usize, from: Edge| {
        let mut chain = vec![from];
        let mut seg = first;
        let mut at = from;
        loop {
            used[seg] = true;
            at = other(seg, at);
            chain.push(at);
            match next_unused(used, at) {
                Some(s) => seg = s,
                None => break,
            }
        }
        chain
    };
    for (i, e) in starts {
        if !used[i] {
            out.push((walk(&mut used, i, e), false));
        }
    }
    for i in 0..segments.len() {
        if !used[i] {
            let start = segments[i].0;
            let mut chain = walk(&mut used, i, start);
            let closed = chain.len() > 2 && chain.first() == chain.last();
            if closed {
                chain.pop();
            }
            out.push((chain, closed));
        }
    }
    out
}
