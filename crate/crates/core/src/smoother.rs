//! The discrete constrained smoothing problem
//!
//! ```text
//! J_N(c) = ||c||_N^2 + (1/tau) sum_i (P(u_N)(x_i) - y_i)^2,   A c <= b,
//! ```
//!
//! its maximum a posteriori solution, and the closed-form unconstrained
//! smoother used as a reference.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::grid::{DomainF, KnotGrid, PiecewiseLinear};
use crate::kernels::Kernel;
use crate::qp::{self, HessianFactor, QpOptions, QpProblem, QpSolution};
use crate::rkhs::RkhsContext;

/// Noisy observations `y_i = u(x_i) + eps_i`, `eps_i ~ N(0, tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    x: Vec<f64>,
    y: Vec<f64>,
    tau: f64,
}

impl Observations {
    pub fn new(x: Vec<f64>, y: Vec<f64>, tau: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "{} inputs but {} outputs",
                x.len(),
                y.len()
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if x.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter("inputs must lie in [0, 1]".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("outputs must be finite".into()));
        }
        Ok(Self { x, y, tau })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn max_abs_y(&self) -> f64 {
        self.y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Reads a CSV with header `x,y`.
    pub fn read_csv(path: &Path, tau: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y"] {
            return Err(Error::Parse(format!(
                "expected header `x,y`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let p = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
            };
            x.push(p(&rec[0])?);
            y.push(p(&rec[1])?);
        }
        Self::new(x, y, tau)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y"])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([format!("{x:.17e}"), format!("{y:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembled smoothing problem on a knot grid.
#[derive(Debug, Clone)]
pub struct SmoothingProblem {
    ctx: RkhsContext,
    obs: Observations,
    cs: ConstraintSet,
    design: Vec<Vec<(usize, f64)>>,
    qp: QpProblem,
}

impl SmoothingProblem {
    /// Builds `H = 2 (Gamma^{-1} + Phi^T Phi / tau)` in factored form and `g = -2 Phi^T y / tau`.
    pub fn assemble(ctx: RkhsContext, obs: Observations, cs: ConstraintSet) -> Result<Self> {
        let grid = ctx.grid();
        let n_knots = grid.len();
        let design: Vec<Vec<(usize, f64)>> =
            obs.x.iter().map(|&x| grid.extended_weights(x)).collect();
        let l = ctx.gram().l_shared();
        let tau = obs.tau;

        // B = Phi L, one sparse combination of rows of L per observation.
        let mut bmat = DMatrix::zeros(obs.len(), n_knots);
        for (i, row) in design.iter().enumerate() {
            for &(j, w) in row {
                for r in 0..=j {
                    bmat[(i, r)] += w * l[(j, r)];
                }
            }
        }
        let m = if obs.is_empty() {
            None
        } else if 3 * obs.len() < n_knots {
            let mut chol = Cholesky::new(DMatrix::<f64>::identity(n_knots, n_knots))
                .expect("identity is positive definite");
            for i in 0..obs.len() {
                let v = bmat.row(i).transpose() / tau.sqrt();
                chol.rank_one_update(&v, 1.0);
            }
            Some(chol.l())
        } else {
            let mmat = DMatrix::identity(n_knots, n_knots) + bmat.tr_mul(&bmat) / tau;
            let chol = Cholesky::new(mmat).ok_or(Error::NotPositiveDefinite { n: n_knots })?;
            Some(chol.l())
        };

        let mut g = DVector::zeros(n_knots);
        for (row, &y) in design.iter().zip(&obs.y) {
            for &(j, w) in row {
                g[j] -= 2.0 * w * y / tau;
            }
        }
        let factor = HessianFactor::Gram {
            l,
            m,
            scale: std::f64::consts::SQRT_2,
        };
        let lin = cs.compile(grid);
        let qp = QpProblem::factored(factor, g, lin.rows)?;
        Ok(Self {
            ctx,
            obs,
            cs,
            design,
            qp,
        })
    }

    pub fn ctx(&self) -> &RkhsContext {
        &self.ctx
    }

    pub fn observations(&self) -> &Observations {
        &self.obs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.cs
    }

    pub fn qp(&self) -> &QpProblem {
        &self.qp
    }

    /// Sparse rows of `Phi`.
    pub fn design_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.design
    }

    pub fn design(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.obs.len(), self.ctx.grid().len());
        for (i, row) in self.design.iter().enumerate() {
            for &(j, w) in row {
                phi[(i, j)] += w;
            }
        }
        phi
    }

    /// `sum_i (Phi c - y)_i^2`.
    pub fn residual_sq(&self, c: &DVector<f64>) -> f64 {
        self.design
            .iter()
            .zip(&self.obs.y)
            .map(|(row, &y)| {
                let fit: f64 = row.iter().map(|&(j, w)| w * c[j]).sum();
                (fit - y) * (fit - y)
            })
            .sum()
    }

    /// `J_N(c)` computed directly from its definition.
    pub fn objective(&self, c: &DVector<f64>) -> f64 {
        self.ctx.norm_sq_coeffs(c) + self.residual_sq(c) / self.obs.tau
    }

    /// The dropped constant `||y||^2 / tau`.
    pub fn objective_offset(&self) -> f64 {
        self.obs.y.iter().map(|y| y * y).sum::<f64>() / self.obs.tau
    }

    /// Minimizer without the shape constraints.
    pub fn unconstrained_minimizer(&self) -> DVector<f64> {
        self.qp.factor().rinv(&(-self.qp.g_tilde()))
    }
}

/// Optional warm start for [`fit_map`].
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub point: Option<DVector<f64>>,
    pub active_set: Option<Vec<usize>>,
}

/// The constrained MAP `u_{N,F}`.
#[derive(Debug, Clone)]
pub struct MapSolution {
    pub coeffs: PiecewiseLinear,
    /// `J_N` at the solution, constant included.
    pub objective: f64,
    pub qp: QpSolution,
    pub kernel: Kernel,
    pub tau: f64,
    pub constraints: ConstraintSet,
    pub jitter: f64,
}

pub fn fit_map(problem: &SmoothingProblem) -> Result<MapSolution> {
    fit_map_warm(problem, &WarmStart::default())
}

/// Solves the smoothing QP, starting from `warm` when it is feasible and otherwise from the
/// unconstrained minimizer pushed into the constraint set.
pub fn fit_map_warm(problem: &SmoothingProblem, warm: &WarmStart) -> Result<MapSolution> {
    let start = match &warm.point {
        Some(p) => problem.cs.feasible_point(p),
        None => problem.cs.feasible_point(&problem.unconstrained_minimizer()),
    };
    let opts = QpOptions {
        initial_point: Some(start),
        warm_start: warm.active_set.clone(),
        ..QpOptions::default()
    };
    let sol = qp::solve(&problem.qp, &opts)?;
    let objective = sol.objective + problem.objective_offset();
    let coeffs = PiecewiseLinear::new(problem.ctx.grid().clone(), sol.x.clone())?;
    Ok(MapSolution {
        coeffs,
        objective,
        qp: sol,
        kernel: *problem.ctx.kernel(),
        tau: problem.obs.tau,
        constraints: problem.cs,
        jitter: problem.ctx.gram().jitter(),
    })
}

#[derive(Serialize)]
struct MapMetadata<'a> {
    kernel: &'a Kernel,
    tau: f64,
    constraints: &'a ConstraintSet,
    domain: &'a DomainF,
    objective: f64,
    kkt_residual: f64,
    jitter: f64,
}

impl MapSolution {
    /// `P(u_{N,F})(t)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.coeffs.eval_extended(t)
    }

    pub fn grid(&self) -> &KnotGrid {
        self.coeffs.grid()
    }

    pub fn kkt_residual(&self) -> f64 {
        self.qp.kkt_residual
    }

    /// CSV `knot,coefficient` preceded by a `#` line holding JSON metadata.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let meta = MapMetadata {
            kernel: &self.kernel,
            tau: self.tau,
            constraints: &self.constraints,
            domain: self.grid().domain(),
            objective: self.objective,
            kkt_residual: self.qp.kkt_residual,
            jitter: self.jitter,
        };
        let json = serde_json::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "# {json}")?;
        writeln!(out, "knot,coefficient")?;
        for (t, c) in self.grid().knots().iter().zip(self.coeffs.coeffs().iter()) {
            writeln!(out, "{t:.17e},{c:.17e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Reads the `knot,coefficient` body of a saved MAP, with the domain from its metadata.
pub fn read_map_csv(text: &str) -> Result<PiecewiseLinear> {
    let mut domain = DomainF::unit();
    let mut knots = Vec::new();
    let mut coeffs = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(meta) = line.strip_prefix('#') {
            let v: serde_json::Value =
                serde_json::from_str(meta.trim()).map_err(|e| Error::Parse(e.to_string()))?;
            if let Some(d) = v.get("domain") {
                domain = serde_json::from_value(d.clone()).map_err(|e| Error::Parse(e.to_string()))?;
            }
            continue;
        }
        if line == "knot,coefficient" {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad line `{line}`")))?;
        let p = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        knots.push(p(a)?);
        coeffs.push(p(b)?);
    }
    let grid = KnotGrid::new(knots, domain)?;
    PiecewiseLinear::new(grid, DVector::from_vec(coeffs))
}

/// Closed-form unconstrained smoother `u(t) = k_n(t)^T (K_n + tau I)^{-1} y`.
#[derive(Debug, Clone)]
pub struct ExactSmoother {
    kernel: Kernel,
    x: Vec<f64>,
    weights: DVector<f64>,
}

impl ExactSmoother {
    pub fn new(kernel: &Kernel, obs: &Observations) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::InvalidParameter("need at least one observation".into()));
        }
        let n = obs.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            kernel.eval(obs.x[i], obs.x[j]) + if i == j { obs.tau } else { 0.0 }
        });
        let chol = Cholesky::new(k).ok_or(Error::NotPositiveDefinite { n })?;
        let weights = chol.solve(&DVector::from_column_slice(&obs.y));
        Ok(Self {
            kernel: *kernel,
            x: obs.x.clone(),
            weights,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.x
            .iter()
            .zip(self.weights.iter())
            .map(|(&xi, &w)| w * self.kernel.eval(t, xi))
            .sum()
    }
}

pub fn unconstrained_reference(kernel: &Kernel, obs: &Observations, t: f64) -> Result<f64> {
    Ok(ExactSmoother::new(kernel, obs)?.eval(t))
}
