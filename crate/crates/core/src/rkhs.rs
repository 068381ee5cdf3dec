//! Finite-dimensional RKHS algebra on a knot grid: the inner product
//! `<u, v>_N = c_u^T Gamma_N^{-1} c_v`, the kernel `K_N`, and the kernel
//! interpolant `rho_N`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{DomainF, KnotGrid, PiecewiseLinear};
use crate::kernels::{Gram, Kernel};

/// Kernel, grid and the factorized Gram matrix on that grid.
#[derive(Debug, Clone)]
pub struct RkhsContext {
    kernel: Kernel,
    grid: KnotGrid,
    gram: Gram,
}

impl RkhsContext {
    pub fn new(kernel: Kernel, grid: KnotGrid, jitter: bool) -> Result<Self> {
        let gram = kernel.gram(grid.knots(), jitter)?;
        Ok(Self { kernel, grid, gram })
    }

    /// Builds a context from an already factorized Gram matrix of `kernel` on `grid`.
    pub fn from_parts(kernel: Kernel, grid: KnotGrid, gram: Gram) -> Result<Self> {
        if gram.n() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "Gram of size {} for {} knots",
                gram.n(),
                grid.len()
            )));
        }
        Ok(Self { kernel, grid, gram })
    }

    /// Context on `grid.refine(t)`, reusing the kernel values already computed.
    pub fn refined(&self, t: f64) -> Result<Self> {
        let pos = self.grid.insertion_index(t)?;
        let grid = self.grid.refine(t)?;
        let gram = self.gram.with_knot(&self.kernel, grid.knots(), pos)?;
        Ok(Self {
            kernel: self.kernel,
            grid,
            gram,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn domain(&self) -> &DomainF {
        self.grid.domain()
    }

    fn check(&self, u: &PiecewiseLinear) -> Result<()> {
        if u.grid().knots() != self.grid.knots() {
            return Err(Error::GridMismatch(
                "function lives on a different knot grid".into(),
            ));
        }
        Ok(())
    }

    /// `<u, v>_N`.
    pub fn inner(&self, u: &PiecewiseLinear, v: &PiecewiseLinear) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.inner_coeffs(u.coeffs(), v.coeffs()))
    }

    pub fn inner_coeffs(&self, cu: &DVector<f64>, cv: &DVector<f64>) -> f64 {
        self.gram.whiten(cu).dot(&self.gram.whiten(cv))
    }

    /// `||c||_N^2`.
    pub fn norm_sq_coeffs(&self, c: &DVector<f64>) -> f64 {
        self.gram.inv_quad(c)
    }

    pub fn norm(&self, u: &PiecewiseLinear) -> Result<f64> {
        self.check(u)?;
        Ok(self.norm_sq_coeffs(u.coeffs()).sqrt())
    }

    /// `K_N(x, x')` through the two nonzero hat functions at each point.
    pub fn kernel_kn(&self, x: f64, xp: f64) -> f64 {
        let (x, xp) = if x <= xp { (x, xp) } else { (xp, x) };
        let a = self.grid.neighbors(x);
        let b = self.grid.neighbors(xp);
        let g = self.gram.matrix();
        let (ia, wa) = ([a.i_lo, a.i_hi], [a.w_lo, a.w_hi]);
        let (ib, wb) = ([b.i_lo, b.i_hi], [b.w_lo, b.w_hi]);
        let mut s = 0.0;
        for p in 0..2 {
            for q in 0..2 {
                s += wa[p] * wb[q] * g[(ia[p], ib[q])];
            }
        }
        s
    }

    /// `K_N(., t)` as a piecewise-linear function on the grid.
    pub fn kernel_section(&self, t: f64) -> PiecewiseLinear {
        let nb = self.grid.neighbors(t);
        let g = self.gram.matrix();
        let c = DVector::from_iterator(
            self.grid.len(),
            (0..self.grid.len()).map(|i| nb.w_lo * g[(i, nb.i_lo)] + nb.w_hi * g[(i, nb.i_hi)]),
        );
        PiecewiseLinear::new(self.grid.clone(), c).expect("sizes agree")
    }

    /// Kernel interpolant `rho_N(v) = sum_i lambda_i K(., t_i)` with `Gamma_N lambda = c_v`.
    pub fn interpolant(&self, v: &PiecewiseLinear) -> Result<KernelInterpolant> {
        self.check(v)?;
        Ok(self.interpolant_coeffs(v.coeffs()))
    }

    pub fn interpolant_coeffs(&self, c: &DVector<f64>) -> KernelInterpolant {
        let weights = self.gram.solve(c);
        let hf_norm_sq = (self.gram.l().transpose() * &weights).norm_squared();
        KernelInterpolant {
            weights,
            kernel: self.kernel,
            knots: self.grid.knots().to_vec(),
            domain: self.grid.domain().clone(),
            hf_norm_sq,
        }
    }

    /// `||pi_N(f)||_N`, the grid estimate of `||f||_{H_F}`.
    pub fn norm_estimate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.norm_sq_coeffs(self.grid.project(f).coeffs()).sqrt()
    }

    /// `max(sqrt K(t,t), sqrt K_N(t,t))` over `points`: a usable embedding constant.
    pub fn embedding_witness(&self, points: &[f64]) -> f64 {
        let mut c = self.kernel.variance().sqrt();
        for &t in points {
            c = c.max(self.kernel_kn(t, t).max(0.0).sqrt());
        }
        c
    }
}

/// `||pi_{N_ref}(f)||_{N_ref}` on a fresh reference context.
pub fn norm_hf_estimate(
    kernel: &Kernel,
    f: impl Fn(f64) -> f64,
    ref_grid: &KnotGrid,
    jitter: bool,
) -> Result<f64> {
    Ok(RkhsContext::new(*kernel, ref_grid.clone(), jitter)?.norm_estimate(f))
}

/// `sum_i lambda_i K(., t_i)`.
#[derive(Debug, Clone)]
pub struct KernelInterpolant {
    weights: DVector<f64>,
    kernel: Kernel,
    knots: Vec<f64>,
    domain: DomainF,
    hf_norm_sq: f64,
}

impl KernelInterpolant {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.knots
            .iter()
            .zip(self.weights.iter())
            .map(|(&ti, &w)| w * self.kernel.eval(t, ti))
            .sum()
    }

    /// `P(h)(t)`: the interpolant restricted to `F` and bridged across holes.
    pub fn eval_extended(&self, t: f64) -> f64 {
        self.domain.extend(|s| self.eval(s), t)
    }

    /// `lambda^T Gamma_N lambda`, the squared `H_F` norm.
    pub fn hf_norm_sq(&self) -> f64 {
        self.hf_norm_sq
    }
}
