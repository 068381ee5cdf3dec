//! Shape constraints (bounds, monotonicity) and their compilation to
//! linear inequalities on knot values.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{KnotGrid, PiecewiseLinear};
use crate::qp::{self, HessianFactor, Inequalities, QpOptions, QpProblem, QpSolution};
use crate::rkhs::{KernelInterpolant, RkhsContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotone {
    Increasing,
    Decreasing,
}

/// A convex set of functions on `[0, 1]` described by bounds and/or a monotone direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    bounds: Option<(f64, f64)>,
    monotone: Option<Monotone>,
}

/// `A c <= b` with a label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInequalities {
    pub rows: Inequalities,
    pub labels: Vec<String>,
}

impl LinearInequalities {
    pub fn len(&self) -> usize {
        self.rows.m()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.m() == 0
    }
}

impl ConstraintSet {
    pub fn new(bounds: Option<(f64, f64)>, monotone: Option<Monotone>) -> Result<Self> {
        if bounds.is_none() && monotone.is_none() {
            return Err(Error::InvalidParameter(
                "a constraint set needs bounds or a monotone direction".into(),
            ));
        }
        if let Some((lo, hi)) = bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!("bad bounds [{lo}, {hi}]")));
            }
        }
        Ok(Self { bounds, monotone })
    }

    /// The whole space; used for unconstrained fits.
    pub fn unconstrained() -> Self {
        Self {
            bounds: None,
            monotone: None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn monotone(&self) -> Option<Monotone> {
        self.monotone
    }

    pub fn is_unconstrained(&self) -> bool {
        self.bounds.is_none() && self.monotone.is_none()
    }

    /// Knot-level inequalities: `lo <= c_j <= hi` then `c_j <= c_{j+1}` (or the reverse).
    ///
    /// Because `P(u_N)` is affine between consecutive knots and across holes of `F`,
    /// these rows are exactly membership of `P(u_N)` in the set.
    pub fn compile(&self, grid: &KnotGrid) -> LinearInequalities {
        let n = grid.len();
        let mut rows = Inequalities::new(n);
        let mut labels = Vec::new();
        let mut push = |row: Vec<(usize, f64)>, rhs: f64, label: String| {
            rows.push(row, rhs).expect("column in range");
            labels.push(label);
        };
        if let Some((lo, hi)) = self.bounds {
            for j in 0..n {
                push(vec![(j, -1.0)], -lo, format!("lower c[{j}]"));
            }
            for j in 0..n {
                push(vec![(j, 1.0)], hi, format!("upper c[{j}]"));
            }
        }
        if let Some(dir) = self.monotone {
            let s = match dir {
                Monotone::Increasing => 1.0,
                Monotone::Decreasing => -1.0,
            };
            for j in 0..n.saturating_sub(1) {
                push(
                    vec![(j, s), (j + 1, -s)],
                    0.0,
                    format!("order c[{j}] c[{}]", j + 1),
                );
            }
        }
        LinearInequalities { rows, labels }
    }

    /// Largest bound violation over `points` plus the largest wrong-way increment between
    /// consecutive points.
    pub fn violation(&self, f: impl Fn(f64) -> f64, points: &[f64]) -> f64 {
        let vals: Vec<f64> = points.iter().map(|&t| f(t)).collect();
        self.violation_of_values(&vals)
    }

    pub fn violation_of_values(&self, vals: &[f64]) -> f64 {
        let mut bound = 0.0f64;
        if let Some((lo, hi)) = self.bounds {
            for &v in vals {
                bound = bound.max(lo - v).max(v - hi);
            }
        }
        let mut order = 0.0f64;
        if let Some(dir) = self.monotone {
            for w in vals.windows(2) {
                let dec = match dir {
                    Monotone::Increasing => w[0] - w[1],
                    Monotone::Decreasing => w[1] - w[0],
                };
                order = order.max(dec);
            }
        }
        bound + order
    }

    /// A point satisfying the knot inequalities exactly: running max (or min) for the
    /// order, then clipping to the bounds.
    pub fn feasible_point(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = c.clone();
        match self.monotone {
            Some(Monotone::Increasing) => {
                for j in 1..out.len() {
                    out[j] = out[j].max(out[j - 1]);
                }
            }
            Some(Monotone::Decreasing) => {
                for j in 1..out.len() {
                    out[j] = out[j].min(out[j - 1]);
                }
            }
            None => {}
        }
        if let Some((lo, hi)) = self.bounds {
            out.apply(|v| *v = v.clamp(lo, hi));
        }
        out
    }

    /// A point strictly inside the constraint polyhedron on `grid`.
    pub fn interior_point(&self, grid: &KnotGrid) -> DVector<f64> {
        let knots = grid.knots();
        let dir = |t: f64| match self.monotone {
            Some(Monotone::Decreasing) => 1.0 - t,
            _ => t,
        };
        DVector::from_iterator(
            knots.len(),
            knots.iter().map(|&t| match (self.bounds, self.monotone) {
                (Some((lo, hi)), Some(_)) => lo + (hi - lo) * (0.25 + 0.5 * dir(t)),
                (Some((lo, hi)), None) => 0.5 * (lo + hi),
                (None, Some(_)) => dir(t),
                (None, None) => 0.0,
            }),
        )
    }
}

/// Fine-grid projection of a kernel interpolant onto the constraint set.
#[derive(Debug, Clone)]
pub struct AlphaProjection {
    /// `||p - pi_ref(h)||_{N_ref}`, the estimate of `alpha_N`.
    pub alpha: f64,
    pub projection: PiecewiseLinear,
    pub qp: QpSolution,
    /// Number of knots of the reference grid that carries the estimate.
    pub n_ref: usize,
}

/// Projects `pi_ref(h)` onto the knot constraints of the fine context in the `||.||_{N_ref}` metric.
pub fn project_alpha(
    ctx_fine: &RkhsContext,
    h: &KernelInterpolant,
    cs: &ConstraintSet,
) -> Result<AlphaProjection> {
    let grid = ctx_fine.grid();
    let q = DVector::from_iterator(grid.len(), grid.knots().iter().map(|&t| h.eval(t)));
    project_coeffs(ctx_fine, &q, cs)
}

/// As [`project_alpha`] for a function already sampled at the fine knots.
pub fn project_coeffs(
    ctx_fine: &RkhsContext,
    q: &DVector<f64>,
    cs: &ConstraintSet,
) -> Result<AlphaProjection> {
    let grid = ctx_fine.grid();
    if q.len() != grid.len() {
        return Err(Error::GridMismatch("coefficients do not match the fine grid".into()));
    }
    let gram = ctx_fine.gram();
    let w = gram.whiten(q);
    let scale = std::f64::consts::SQRT_2;
    let factor = HessianFactor::Gram {
        l: gram.l_shared(),
        m: None,
        scale,
    };
    let lin = cs.compile(grid);
    let problem = QpProblem::factored_tilde(factor, -(&w * scale), lin.rows)?;
    let opts = QpOptions {
        initial_point: Some(cs.feasible_point(q)),
        ..QpOptions::default()
    };
    let sol = qp::solve(&problem, &opts)?;
    let alpha = gram.whiten(&(&sol.x - q)).norm();
    let projection = PiecewiseLinear::new(grid.clone(), sol.x.clone())?;
    Ok(AlphaProjection {
        alpha,
        projection,
        qp: sol,
        n_ref: grid.len(),
    })
}
