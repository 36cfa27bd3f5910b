//! Convex hull of seed coefficient vectors, queried through linear programs.
//!
//! Membership is convex-combination feasibility: `alpha` is inside when some
//! `lambda >= 0` with `sum(lambda) = 1` reproduces it. Facets are never
//! enumerated.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::pca::{Alpha, COMPONENTS};

/// Default feasibility slack.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullModel {
    points: Vec<Alpha>,
    tolerance: f64,
}

impl HullModel {
    pub fn new(points: Vec<Alpha>, tolerance: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(argument("hull needs at least one point"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(argument("hull points must be finite"));
        }
        if !(tolerance >= 0.0) {
            return Err(argument("tolerance must be non-negative"));
        }
        Ok(HullModel { points, tolerance })
    }

    pub fn points(&self) -> &[Alpha] {
        &self.points
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn centroid(&self) -> Alpha {
        let mut c = [0.0; COMPONENTS];
        for p in &self.points {
            for (c, v) in c.iter_mut().zip(p) {
                *c += v;
            }
        }
        c.map(|v| v / self.points.len() as f64)
    }

    /// Per-coordinate `(min, max)` over the seed points, i.e. the axis extent
    /// of the hull.
    pub fn extent(&self) -> [(f64, f64); COMPONENTS] {
        let mut e = [(f64::INFINITY, f64::NEG_INFINITY); COMPONENTS];
        for p in &self.points {
            for (e, &v) in e.iter_mut().zip(p) {
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
        }
        e
    }

    /// Number of affinely independent directions spanned by the points.
    pub fn affine_rank(&self) -> usize {
        let c = self.centroid();
        let n = self.points.len();
        let m = DMatrix::from_fn(n, COMPONENTS, |i, j| self.points[i][j] - c[j]);
        let sv = m.singular_values();
        let max = sv.max();
        if max == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > 1e-9 * max).count()
    }

    /// Fails unless the hull has a non-zero 5D volume.
    pub fn ensure_full_dimensional(&self) -> Result<()> {
        let rank = self.affine_rank();
        if rank < COMPONENTS {
            return Err(argument(format!(
                "degenerate hull: points span {rank} of {COMPONENTS} dimensions"
            )));
        }
        Ok(())
    }

    fn add_lambdas(&self, problem: &mut Problem, objective: impl Fn(&Alpha) -> f64) -> Vec<Variable> {
        let lambdas: Vec<Variable> =
            self.points.iter().map(|p| problem.add_var(objective(p), (0.0, f64::INFINITY))).collect();
        let mut sum = LinearExpr::empty();
        for &l in &lambdas {
            sum.add(l, 1.0);
        }
        problem.add_constraint(sum, ComparisonOp::Eq, 1.0);
        lambdas
    }

    /// Smallest Chebyshev distance between `alpha` and a convex combination
    /// of the points.
    pub fn residual(&self, alpha: &Alpha) -> f64 {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let lambdas = self.add_lambdas(&mut problem, |_| 0.0);
        let t = problem.add_var(1.0, (0.0, f64::INFINITY));
        for (j, &target) in alpha.iter().enumerate() {
            let mut upper = LinearExpr::empty();
            let mut lower = LinearExpr::empty();
            for (l, p) in lambdas.iter().zip(&self.points) {
                upper.add(*l, p[j]);
                lower.add(*l, p[j]);
            }
            upper.add(t, -1.0);
            lower.add(t, 1.0);
            problem.add_constraint(upper, ComparisonOp::Le, target);
            problem.add_constraint(lower, ComparisonOp::Ge, target);
        }
        match problem.solve().ok().and_then(|s| s.into_solution().ok()) {
            Some(sol) => sol.objective().max(0.0),
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, alpha: &Alpha) -> bool {
        if alpha.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self.points.contains(alpha) {
            return true;
        }
        self.residual(alpha) <= self.tolerance
    }

    /// Feasible interval of coordinate `axis` with the other coordinates of
    /// `at` held fixed. `None` when the line misses the hull.
    pub fn coordinate_range(&self, at: &Alpha, axis: usize) -> Option<(f64, f64)> {
        let solve = |direction| {
            let mut problem = Problem::new(direction);
            let lambdas = self.add_lambdas(&mut problem, |p| p[axis]);
            for j in (0..COMPONENTS).filter(|&j| j != axis) {
                let mut e = LinearExpr::empty();
                for (l, p) in lambdas.iter().zip(&self.points) {
                    e.add(*l, p[j]);
                }
                problem.add_constraint(e, ComparisonOp::Eq, at[j]);
            }
            problem.solve().ok().and_then(|s| s.into_solution().ok()).map(|s| s.objective())
        };
        let lo = solve(OptimizationDirection::Minimize)?;
        let hi = solve(OptimizationDirection::Maximize)?;
        (lo <= hi).then_some((lo, hi))
    }
}
