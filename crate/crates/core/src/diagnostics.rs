//! Quantities entering the error bounds: modulus of continuity, regularity indicator,
//! interpolation and kernel gaps, the constants `d1..d8` and the two bound right-hand sides.

use std::collections::VecDeque;

use serde::Serialize;

use crate::constraints::{project_alpha, ConstraintSet};
use crate::error::{Error, Result};
use crate::grid::{DomainF, KnotGrid};
use crate::kernels::{HolderParams, Kernel};
use crate::rkhs::RkhsContext;
use crate::smoother::{fit_map, MapSolution, Observations, SmoothingProblem};

/// Points of the logarithmic mesh used for the regularity indicator.
pub const PSI_MESH: usize = 200;

/// Default size of the reference grid standing in for the exact solution.
pub const N_REF: usize = 1000;

/// Relative slack on pair distances so that pairs exactly `delta` apart survive rounding.
const DIST_SLACK: f64 = 1e-12;

/// A function sampled at sorted points.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl Samples {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} values",
                t.len(),
                v.len()
            )));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("sample points must be strictly increasing".into()));
        }
        Ok(Self { t, v })
    }

    pub fn from_fn(points: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(points.to_vec(), points.iter().map(|&t| f(t)).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn range(&self) -> f64 {
        let (lo, hi) = self
            .v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if lo.is_finite() { hi - lo } else { 0.0 }
    }
}

/// `M_f(delta)`: the largest `|f(s) - f(t)|` over sampled pairs with `|s - t| <= delta`.
pub fn modulus(f: &Samples, delta: f64) -> f64 {
    if f.is_empty() || delta <= 0.0 {
        return 0.0;
    }
    if delta >= 1.0 {
        return f.range();
    }
    let reach = delta * (1.0 + DIST_SLACK) + DIST_SLACK;
    let (t, v) = (&f.t, &f.v);
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    let mut lo = 0;
    for hi in 0..t.len() {
        while maxq.back().is_some_and(|&j| v[j] <= v[hi]) {
            maxq.pop_back();
        }
        maxq.push_back(hi);
        while minq.back().is_some_and(|&j| v[j] >= v[hi]) {
            minq.pop_back();
        }
        minq.push_back(hi);
        while t[hi] - t[lo] > reach {
            lo += 1;
        }
        while maxq.front().is_some_and(|&j| j < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < lo) {
            minq.pop_front();
        }
        best = best.max(v[maxq[0]] - v[minq[0]]);
    }
    best
}

/// `Psi_f(delta) = sup_{t >= 1} M_f(t delta) / t` on a logarithmic mesh of `[1, 1/delta]`.
///
/// Beyond `t = 1/delta` the modulus is constant, so the tail contributes `M_f(1) delta`.
pub fn psi(f: &Samples, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    if delta >= 1.0 {
        return modulus(f, delta);
    }
    let log_top = -delta.ln();
    let mut best = f.range() * delta;
    for k in 0..PSI_MESH {
        let t = (log_top * k as f64 / (PSI_MESH - 1) as f64).exp();
        best = best.max(modulus(f, t * delta) / t);
    }
    best
}

/// `F_N(f)`: the largest `|pi_N(f) - f|` over `points`.
pub fn interp_error(grid: &KnotGrid, f: impl Fn(f64) -> f64, points: &[f64]) -> f64 {
    let p = grid.project(&f);
    points.iter().map(|&t| (p.eval(t) - f(t)).abs()).fold(0.0, f64::max)
}

/// Squared `H_F` distance between `rho_N(K_N(., t))` and `K(., t)`.
pub fn kernel_gap_at(ctx: &RkhsContext, t: f64) -> f64 {
    let k = ctx.kernel();
    let nb = ctx.grid().neighbors(t);
    let cross = nb.w_lo * k.eval(t, nb.lo) + nb.w_hi * k.eval(t, nb.hi);
    (ctx.kernel_kn(t, t) + k.eval(t, t) - 2.0 * cross).max(0.0)
}

/// `G_N`: the kernel gap maximized over the audit sample of the grid.
pub fn kernel_gap(ctx: &RkhsContext) -> f64 {
    ctx.grid()
        .audit_points()
        .iter()
        .map(|&t| kernel_gap_at(ctx, t))
        .fold(0.0, f64::max)
}

/// `6 c_K delta^beta`.
pub fn kernel_gap_bound(holder: &HolderParams, delta: f64) -> f64 {
    6.0 * holder.c_k * pow_log(delta, holder.beta)
}

/// `x^p` through logarithms; `0` for `x = 0`.
pub fn pow_log(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        f64::INFINITY
    } else {
        (p * x.ln()).exp()
    }
}

/// The exact-solution proxy: the constrained fit on an equispaced reference grid.
#[derive(Debug, Clone)]
pub struct Reference {
    ctx: RkhsContext,
    fit: MapSolution,
    norm: f64,
    samples: Samples,
}

impl Reference {
    pub fn fit(
        kernel: Kernel,
        obs: &Observations,
        cs: ConstraintSet,
        domain: &DomainF,
        n_ref: usize,
        jitter: bool,
    ) -> Result<Self> {
        let grid = if domain.is_unit() {
            KnotGrid::equispaced(n_ref)?
        } else {
            KnotGrid::spread_over(domain, n_ref)?
        };
        let ctx = RkhsContext::new(kernel, grid, jitter)?;
        let problem = SmoothingProblem::assemble(ctx.clone(), obs.clone(), cs)?;
        let fit = fit_map(&problem)?;
        Ok(Self::from_fit(ctx, fit))
    }

    pub fn from_fit(ctx: RkhsContext, fit: MapSolution) -> Self {
        let norm = ctx.norm_sq_coeffs(fit.coeffs.coeffs()).sqrt();
        let points = ctx.grid().audit_points();
        let vals = points.iter().map(|&t| fit.evaluate(t)).collect();
        let samples = Samples { t: points, v: vals };
        Self { ctx, fit, norm, samples }
    }

    pub fn ctx(&self) -> &RkhsContext {
        &self.ctx
    }

    pub fn solution(&self) -> &MapSolution {
        &self.fit
    }

    /// Estimate of `||u_F||_{H_F}`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// The proxy sampled on its audit grid.
    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn n_ref(&self) -> usize {
        self.ctx.grid().len()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.fit.evaluate(t)
    }
}

/// Constants of the error bounds. `d6` and `d7` are empirical values for the fit at hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
    pub d6: f64,
    pub d7: f64,
    pub d8: f64,
}

/// Inputs of [`bound_constants`], all scalar.
#[derive(Debug, Clone, Copy)]
pub struct ConstantInputs {
    pub c: f64,
    pub c_k: f64,
    pub n_obs: usize,
    pub tau: f64,
    pub max_abs_y: f64,
    /// `||u_F||_{H_F}` estimate.
    pub ref_norm: f64,
    /// `||u_{N,F}||_N`.
    pub fit_norm: f64,
    /// `max_i |P(P_C h)(x_i) + P(h)(x_i) - 2 y_i|`.
    pub d6: f64,
    /// `||P_C h|| + ||h||`.
    pub d7: f64,
}

pub fn bound_constants(inp: &ConstantInputs) -> BoundConstants {
    let n = inp.n_obs as f64;
    let d1 = (8.0 * inp.c_k).sqrt() * inp.ref_norm;
    let d2 = 6.0 * inp.c_k;
    let d3 = 2.0 * n * d1 / inp.tau * (inp.c * inp.ref_norm + inp.max_abs_y);
    let d4 = 2.0 * n * d2.sqrt() / inp.tau * inp.fit_norm * (inp.c * inp.fit_norm + inp.max_abs_y);
    let d8 = inp.d7 + n * inp.c * inp.d6 / inp.tau;
    BoundConstants {
        c: inp.c,
        d1,
        d2,
        d3,
        d4,
        d5: d3 + d4,
        d6: inp.d6,
        d7: inp.d7,
        d8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBounds {
    /// `c sqrt(d5 delta^{beta/2}) + d1 delta^{beta/2}`, valid when `alpha_N = 0`.
    pub bound55: f64,
    /// `c sqrt(d8 alpha + d5 delta^{beta/2}) + d1 delta^{beta/2}`.
    pub bound56: f64,
    pub bound55_applicable: bool,
}

/// Threshold below which the estimated `alpha_N` counts as zero.
pub const ALPHA_ZERO: f64 = 1e-10;

pub fn theorem_bounds(k: &BoundConstants, delta: f64, beta: f64, alpha: f64) -> TheoremBounds {
    let h = pow_log(delta, 0.5 * beta);
    TheoremBounds {
        bound55: k.c * (k.d5 * h).sqrt() + k.d1 * h,
        bound56: k.c * (k.d8 * alpha + k.d5 * h).sqrt() + k.d1 * h,
        bound55_applicable: alpha <= ALPHA_ZERO,
    }
}

/// Every quantity of the error analysis for one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub delta_n: f64,
    pub beta: f64,
    /// Estimated Hölder constant of the kernel.
    pub c_k: f64,
    /// `F_N` of the reference proxy.
    pub f_n: f64,
    /// `2 Psi(delta_N)` of the reference proxy.
    pub psi_bound: f64,
    pub g_n: f64,
    pub g_n_bound: f64,
    /// Fine-grid estimate of `alpha_N`.
    pub alpha_n: f64,
    pub constants: BoundConstants,
    pub bounds: TheoremBounds,
    pub sup_error: f64,
    /// Size of the reference grid carrying the estimates.
    pub n_ref: usize,
    /// `M(delta_N)` of the proxy against `sqrt(2 c_K) ||u_F|| delta_N^{beta/2}` (reported only).
    pub holder_modulus: f64,
    pub holder_modulus_bound: f64,
}

impl BoundReport {
    /// Constants from estimates rather than closed forms, reported next to each value.
    pub fn label(&self) -> String {
        format!("estimated, N_ref = {}", self.n_ref)
    }
}

/// Builds the report for `fit`, the solution of `problem`, against `reference`.
pub fn bound_report(
    problem: &SmoothingProblem,
    fit: &MapSolution,
    reference: &Reference,
    holder: &HolderParams,
) -> Result<BoundReport> {
    let ctx = problem.ctx();
    let grid = ctx.grid();
    let obs = problem.observations();
    let cs = problem.constraints();
    let delta = grid.delta();

    let mut extra: Vec<f64> = grid.knots().to_vec();
    extra.extend_from_slice(reference.ctx().grid().knots());
    let points = grid.domain().audit_points(&extra);
    let sup_error = points
        .iter()
        .map(|&t| (fit.evaluate(t) - reference.eval(t)).abs())
        .fold(0.0, f64::max);

    let f_n = interp_error(grid, |t| reference.eval(t), &points);
    let psi_bound = 2.0 * psi(reference.samples(), delta);
    let g_n = kernel_gap(ctx);

    let h = ctx.interpolant_coeffs(fit.coeffs.coeffs());
    let fine = reference.ctx();
    let proj = project_alpha(fine, &h, cs)?;

    let c = ctx.embedding_witness(&points).max(fine.embedding_witness(&points));
    let fit_norm = h.hf_norm_sq().max(0.0).sqrt();
    let proj_norm = fine.norm_sq_coeffs(proj.projection.coeffs()).sqrt();
    let d6 = obs
        .x()
        .iter()
        .zip(obs.y())
        .map(|(&x, &y)| (proj.projection.eval_extended(x) + h.eval_extended(x) - 2.0 * y).abs())
        .fold(0.0, f64::max);
    let constants = bound_constants(&ConstantInputs {
        c,
        c_k: holder.c_k,
        n_obs: obs.len(),
        tau: obs.tau(),
        max_abs_y: obs.max_abs_y(),
        ref_norm: reference.norm(),
        fit_norm,
        d6,
        d7: proj_norm + fit_norm,
    });
    let bounds = theorem_bounds(&constants, delta, holder.beta, proj.alpha);

    Ok(BoundReport {
        n: grid.len(),
        delta_n: delta,
        beta: holder.beta,
        c_k: holder.c_k,
        f_n,
        psi_bound,
        g_n,
        g_n_bound: kernel_gap_bound(holder, delta),
        alpha_n: proj.alpha,
        constants,
        bounds,
        sup_error,
        n_ref: reference.n_ref(),
        holder_modulus: modulus(reference.samples(), delta),
        holder_modulus_bound: (2.0 * holder.c_k).sqrt() * reference.norm() * pow_log(delta, 0.5 * holder.beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_samples(f: impl Fn(f64) -> f64) -> Samples {
        let pts: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        Samples::from_fn(&pts, f).unwrap()
    }

    #[test]
    fn modulus_examples() {
        assert!((modulus(&unit_samples(|t| t), 0.1) - 0.1).abs() < 1e-12);
        assert_eq!(modulus(&unit_samples(|_| 3.0), 0.1), 0.0);
        assert!((modulus(&unit_samples(f64::sqrt), 0.04) - 0.2).abs() < 1e-12);
        assert!((modulus(&unit_samples(|t| t * t), 5.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_of_identity() {
        let s = unit_samples(|t| t);
        for d in [0.1, 0.01, 0.003] {
            assert!((psi(&s, d) - d).abs() < 1e-12);
        }
        assert_eq!(psi(&unit_samples(|_| 1.0), 0.1), 0.0);
    }

    #[test]
    fn interp_error_of_parabola() {
        let g = KnotGrid::equispaced(3).unwrap();
        let pts: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        assert!((interp_error(&g, |t| t * t, &pts) - 1.0 / 16.0).abs() < 1e-15);
        assert!(interp_error(&g, |t| 2.0 * t - 1.0, &pts) < 1e-15);
    }

    #[test]
    fn constants_identities() {
        let inp = ConstantInputs {
            c: 1.0,
            c_k: 2.0,
            n_obs: 0,
            tau: 0.1,
            max_abs_y: 0.0,
            ref_norm: 1.5,
            fit_norm: 1.2,
            d6: 0.0,
            d7: 2.7,
        };
        let k = bound_constants(&inp);
        assert_eq!(k.d3, 0.0);
        assert_eq!(k.d4, 0.0);
        assert_eq!(k.d5, k.d3 + k.d4);
        assert_eq!(k.d2, 12.0);
        assert_eq!(k.d1, 4.0 * 1.5);
        let b = theorem_bounds(&k, 0.01, 1.0, 0.0);
        assert_eq!(b.bound55, b.bound56);
        assert!(b.bound55_applicable);
        assert!(!theorem_bounds(&k, 0.01, 1.0, 1e-6).bound55_applicable);
    }

    #[test]
    fn pow_log_edges() {
        assert_eq!(pow_log(0.0, 0.5), 0.0);
        assert!((pow_log(0.25, 0.5) - 0.5).abs() < 1e-15);
        assert!(pow_log(1e-300, 0.25) > 0.0);
    }
}
