//! Stationary covariance kernels on `[0, 1]`, their Gram matrices and
//! Hölder regularity parameters.

mod bessel;

pub use bessel::{bessel_k, bessel_k_scaled, MAX_ORDER};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Relative diagonal jitter used when a Gram factorization is allowed to be regularized.
pub const JITTER_FACTOR: f64 = 1e-10;

/// Step of the distance grid used to estimate `c_K`.
const HOLDER_STEP: f64 = 1e-4;
const HOLDER_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    Matern { nu: f64 },
    SquaredExponential,
}

/// Covariance kernel `K(x, x') = k(|x - x'|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    variance: f64,
    lengthscale: f64,
    /// `ln(2^{1-nu} / Gamma(nu))`, cached for the Bessel path.
    #[serde(skip)]
    ln_norm: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Kernel {
    /// Matérn kernel with smoothness `nu` in `(0, 10]`.
    pub fn matern(variance: f64, lengthscale: f64, nu: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("lengthscale", lengthscale)?;
        check_positive("nu", nu)?;
        if nu > MAX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "Matérn smoothness must not exceed {MAX_ORDER}, got {nu}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Matern { nu },
            variance,
            lengthscale,
            ln_norm: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
        })
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("lengthscale", lengthscale)?;
        Ok(Self {
            family: KernelFamily::SquaredExponential,
            variance,
            lengthscale,
            ln_norm: 0.0,
        })
    }

    pub fn from_family(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        match family {
            KernelFamily::Matern { nu } => Self::matern(variance, lengthscale, nu),
            KernelFamily::SquaredExponential => Self::squared_exponential(variance, lengthscale),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// `K(x, x')`.
    pub fn eval(&self, x: f64, xp: f64) -> f64 {
        self.eval_distance((x - xp).abs())
    }

    /// `k(r)` for `r >= 0`. Half-integer Matérn orders use their closed forms.
    pub fn eval_distance(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.variance;
        }
        let s2 = self.variance;
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => s2 * (-0.5 * (r / l) * (r / l)).exp(),
            KernelFamily::Matern { nu } if nu == 0.5 => s2 * (-r / l).exp(),
            KernelFamily::Matern { nu } if nu == 1.5 => {
                let a = 3f64.sqrt() * r / l;
                s2 * (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern { nu } if nu == 2.5 => {
                let a = 5f64.sqrt() * r / l;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
            KernelFamily::Matern { .. } => self.eval_distance_bessel(r),
        }
    }

    /// Matérn `k(r)` through the general Bessel formula, bypassing closed forms.
    ///
    /// Falls back to [`Kernel::eval_distance`] for the squared exponential.
    pub fn eval_distance_bessel(&self, r: f64) -> f64 {
        let KernelFamily::Matern { nu } = self.family else {
            return self.eval_distance(r);
        };
        if r == 0.0 {
            return self.variance;
        }
        let z = (2.0 * nu).sqrt() * r / self.lengthscale;
        // K_nu(z) e^z is finite for every z > 0, so work with the scaled value in logs.
        let kz = bessel_k_scaled(nu, z).expect("order validated at construction");
        self.variance * (self.ln_norm + nu * z.ln() + kz.ln() - z).exp()
    }

    /// Hölder exponent `beta = min(1, 2 nu)`; `1` for the squared exponential.
    pub fn beta(&self) -> f64 {
        match self.family {
            KernelFamily::Matern { nu } => (2.0 * nu).min(1.0),
            KernelFamily::SquaredExponential => 1.0,
        }
    }

    /// Hölder parameters with `c_K` estimated on a distance grid of step `1e-4`.
    ///
    /// For a stationary kernel `|K(u,s) - K(u,t)| = |k(a) - k(b)|` with `|a - b| <= |s - t|`,
    /// so the supremum over triples in `[0,1]^3` equals the supremum over distance pairs.
    pub fn holder_params(&self) -> HolderParams {
        let beta = self.beta();
        let m = (1.0 / HOLDER_STEP).round() as usize;
        let vals: Vec<f64> = (0..=m)
            .map(|i| self.eval_distance(i as f64 * HOLDER_STEP))
            .collect();
        let inv_pow: Vec<f64> = (0..=m)
            .map(|lag| {
                if lag == 0 {
                    0.0
                } else {
                    (lag as f64 * HOLDER_STEP).powf(-beta)
                }
            })
            .collect();
        let mut best = 0.0f64;
        for i in 0..m {
            let vi = vals[i];
            for (lag, &w) in inv_pow.iter().enumerate().take(m - i + 1).skip(1) {
                let q = (vi - vals[i + lag]).abs() * w;
                if q > best {
                    best = q;
                }
            }
        }
        HolderParams {
            beta,
            c_k: HOLDER_SAFETY * best,
            estimated: true,
        }
    }

    /// Gram matrix at `knots` with its Cholesky factor.
    ///
    /// With `jitter` set, `JITTER_FACTOR * variance` is added to the diagonal before factorizing.
    pub fn gram(&self, knots: &[f64], jitter: bool) -> Result<Gram> {
        check_knots(knots)?;
        let n = knots.len();
        let eps = if jitter { JITTER_FACTOR * self.variance } else { 0.0 };
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = self.variance + eps;
            for i in (j + 1)..n {
                let v = self.eval(knots[i], knots[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { n })?;
        let l = Arc::new(chol.l());
        if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite { n });
        }
        Ok(Gram {
            matrix: m,
            l,
            jitter: eps,
        })
    }

    /// Vector `(K(t, t_i))_i`.
    pub fn column(&self, t: f64, knots: &[f64]) -> DVector<f64> {
        DVector::from_iterator(knots.len(), knots.iter().map(|&ti| self.eval(t, ti)))
    }
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::InvalidParameter("empty knot set".into()));
    }
    for w in knots.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "knots must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if knots.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter("knots must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Hölder exponent and constant of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub beta: f64,
    pub c_k: f64,
    /// `true` when `c_k` is a numerical estimate rather than a proven constant.
    pub estimated: bool,
}

/// Gram matrix `Gamma_N` with a Cholesky factor `L` (`Gamma_N = L L^T`).
#[derive(Debug, Clone)]
pub struct Gram {
    matrix: DMatrix<f64>,
    l: Arc<DMatrix<f64>>,
    jitter: f64,
}

impl Gram {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular Cholesky factor.
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Shared handle on the Cholesky factor.
    pub fn l_shared(&self) -> Arc<DMatrix<f64>> {
        Arc::clone(&self.l)
    }

    /// Diagonal jitter that was added (`0` when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }

    /// `Gamma_N^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.whiten(b);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `L^{-1} b`.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `L^{-1} B` for a block of right-hand sides.
    pub fn whiten_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `b^T Gamma_N^{-1} b`.
    pub fn inv_quad(&self, b: &DVector<f64>) -> f64 {
        self.whiten(b).norm_squared()
    }

    /// Gram matrix after inserting knot `t` at position `pos` of `knots` (the enlarged list).
    ///
    /// Existing kernel values are reused; the factorization is recomputed from scratch.
    pub fn with_knot(&self, kernel: &Kernel, knots: &[f64], pos: usize) -> Result<Gram> {
        let n = self.n() + 1;
        if knots.len() != n || pos >= n {
            return Err(Error::GridMismatch(format!(
                "inserting at {pos} needs {n} knots, got {}",
                knots.len()
            )));
        }
        check_knots(knots)?;
        let old = |i: usize| if i < pos { i } else { i - 1 };
        let t = knots[pos];
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = if i == pos && j == pos {
                    kernel.variance + self.jitter
                } else if i == pos {
                    kernel.eval(t, knots[j])
                } else if j == pos {
                    kernel.eval(knots[i], t)
                } else {
                    self.matrix[(old(i), old(j))]
                };
            }
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { n })?;
        let l = Arc::new(chol.l());
        if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite { n });
        }
        Ok(Gram {
            matrix: m,
            l,
            jitter: self.jitter,
        })
    }
}
