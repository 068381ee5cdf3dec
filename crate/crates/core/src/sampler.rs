//! Constrained Gaussian process replicates and noisy observations.
//!
//! Knot coefficients `c ~ N(0, Gamma_N)` restricted to `{A c <= b}` are drawn by a
//! systematic-scan Gibbs sampler in whitened coordinates `c = L z`, where every conditional
//! is a one-dimensional truncated standard normal.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::grid::{KnotGrid, PiecewiseLinear};
use crate::kernels::Kernel;
use crate::qp::Inequalities;
use crate::rkhs::RkhsContext;
use crate::smoother::Observations;

pub const BURN_IN: usize = 500;
pub const THIN: usize = 10;
pub const DEFAULT_N_OBS: usize = 50;
pub const DEFAULT_KNOTS: usize = 200;

/// SplitMix64 step, used to derive independent stream seeds from one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal truncated to `[a, b]`.
pub fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if !(a < b) {
        return if a.is_finite() { a } else { b };
    }
    if b <= 0.0 {
        return -truncated_standard_normal(rng, -b, -a);
    }
    if a <= 0.0 {
        if b - a >= 2.0 {
            loop {
                let x: f64 = StandardNormal.sample(rng);
                if a <= x && x <= b {
                    return x;
                }
            }
        }
        loop {
            let u = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (-0.5 * u * u).exp() {
                return u;
            }
        }
    }
    if (b - a) * (b + a) <= 2.0 {
        loop {
            let u = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (0.5 * (a * a - u * u)).exp() {
                return u;
            }
        }
    }
    if a < 0.5 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if a <= x && x <= b {
                return x;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / lambda;
        if x > b {
            continue;
        }
        if rng.random::<f64>() <= (-0.5 * (x - lambda) * (x - lambda)).exp() {
            return x;
        }
    }
}

/// Gibbs chain on `z` with `L z` confined to `{A c <= b}`.
#[derive(Debug, Clone)]
pub struct TruncatedGibbs {
    l: DMatrix<f64>,
    d: DMatrix<f64>,
    b: DVector<f64>,
    z: DVector<f64>,
    slack: DVector<f64>,
    rng: ChaCha8Rng,
}

impl TruncatedGibbs {
    /// `l` is a lower Cholesky factor of the prior covariance; `start` must satisfy the rows.
    pub fn new(l: DMatrix<f64>, rows: &Inequalities, start: &DVector<f64>, seed: u64) -> Result<Self> {
        let n = l.nrows();
        if rows.n() != n || start.len() != n {
            return Err(Error::GridMismatch("sampler dimensions disagree".into()));
        }
        let viol = rows.max_violation(start);
        if viol > 0.0 {
            return Err(Error::Infeasible { max_violation: viol });
        }
        let (a, b) = rows.to_dense();
        let d = &a * &l;
        let z = l
            .solve_lower_triangular(start)
            .ok_or(Error::NotPositiveDefinite { n })?;
        let slack = &b - &d * &z;
        Ok(Self {
            l,
            d,
            b,
            z,
            slack,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// One systematic scan over all coordinates.
    pub fn sweep(&mut self) {
        let m = self.d.nrows();
        for j in 0..self.z.len() {
            let zj = self.z[j];
            let col = self.d.column(j);
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in 0..m {
                let dr = col[r];
                if dr > 0.0 {
                    hi = hi.min(zj + self.slack[r].max(0.0) / dr);
                } else if dr < 0.0 {
                    lo = lo.max(zj + self.slack[r].max(0.0) / dr);
                }
            }
            if lo > hi {
                continue;
            }
            let new = truncated_standard_normal(&mut self.rng, lo, hi);
            let step = new - zj;
            if step != 0.0 {
                self.z[j] = new;
                self.slack.axpy(-step, &col, 1.0);
            }
        }
        self.slack = &self.b - &self.d * &self.z;
    }

    /// Current coefficients `L z`.
    pub fn coeffs(&self) -> DVector<f64> {
        &self.l * &self.z
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Settings of one constrained replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSpec {
    pub kernel: Kernel,
    #[serde(skip)]
    pub grid: KnotGrid,
    pub constraints: ConstraintSet,
    pub n_obs: usize,
    pub tau: f64,
    pub seed: u64,
    pub jitter: bool,
}

impl ReplicateSpec {
    pub fn new(kernel: Kernel, constraints: ConstraintSet, seed: u64) -> Result<Self> {
        Ok(Self {
            kernel,
            grid: KnotGrid::equispaced(DEFAULT_KNOTS)?,
            constraints,
            n_obs: DEFAULT_N_OBS,
            tau: 5e-2,
            seed,
            jitter: false,
        })
    }

    fn chain(&self, seed: u64) -> Result<TruncatedGibbs> {
        let ctx = RkhsContext::new(self.kernel, self.grid.clone(), self.jitter)?;
        let lin = self.constraints.compile(&self.grid);
        let start = self.constraints.interior_point(&self.grid);
        TruncatedGibbs::new(ctx.gram().l().clone(), &lin.rows, &start, seed)
    }

    fn finish(&self, c: DVector<f64>) -> Result<PiecewiseLinear> {
        // Rounding in `L z` can leave violations of order 1e-16; snap them away.
        PiecewiseLinear::new(self.grid.clone(), self.constraints.feasible_point(&c))
    }
}

/// One draw after burn-in.
pub fn sample_constrained(spec: &ReplicateSpec) -> Result<PiecewiseLinear> {
    Ok(sample_many(spec, 1)?.remove(0))
}

/// `count` draws from one chain: burn-in, then one draw every `THIN` sweeps.
pub fn sample_many(spec: &ReplicateSpec, count: usize) -> Result<Vec<PiecewiseLinear>> {
    let mut chain = spec.chain(derive_seed(spec.seed, 0))?;
    for _ in 0..BURN_IN {
        chain.sweep();
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k > 0 {
            for _ in 0..THIN {
                chain.sweep();
            }
        }
        out.push(spec.finish(chain.coeffs())?);
    }
    Ok(out)
}

/// `n` inputs uniform on `[0, 1]`, sorted.
pub fn uniform_inputs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    x.sort_by(f64::total_cmp);
    x
}

/// `y_i = P(path)(x_i) + eps_i` with `eps ~ N(0, tau I)`.
pub fn corrupt(path: &PiecewiseLinear, xs: &[f64], tau: f64, seed: u64) -> Result<Observations> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = tau.sqrt();
    let y = xs
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            path.eval_extended(x) + sd * e
        })
        .collect();
    Observations::new(xs.to_vec(), y, tau)
}

/// A sampled path with its observations.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub id: usize,
    pub path: PiecewiseLinear,
    pub observations: Observations,
}

/// Replicate `id`: path, inputs and noise each use their own stream derived from the seed.
pub fn replicate(spec: &ReplicateSpec, id: usize) -> Result<Replicate> {
    let base = derive_seed(spec.seed, id as u64 + 1);
    let mut chain = spec.chain(derive_seed(base, 1))?;
    for _ in 0..BURN_IN {
        chain.sweep();
    }
    let path = spec.finish(chain.coeffs())?;
    let xs = uniform_inputs(spec.n_obs, derive_seed(base, 2));
    let observations = corrupt(&path, &xs, spec.tau, derive_seed(base, 3))?;
    Ok(Replicate {
        id,
        path,
        observations,
    })
}

impl Replicate {
    /// `knot,value` rows after a `# {json}` header describing the spec.
    pub fn write_csv(&self, spec: &ReplicateSpec, out: &mut impl Write) -> Result<()> {
        let meta = serde_json::json!({ "replicate_id": self.id, "spec": spec });
        writeln!(out, "# {meta}")?;
        writeln!(out, "knot,value")?;
        for (t, v) in self.path.grid().knots().iter().zip(self.path.coeffs().iter()) {
            writeln!(out, "{t:.17e},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn save(&self, spec: &ReplicateSpec, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("replicate_{:03}.csv", self.id)),
        )?);
        self.write_csv(spec, &mut f)?;
        self.observations
            .write_csv(&dir.join(format!("observations_{:03}.csv", self.id)))
    }
}
