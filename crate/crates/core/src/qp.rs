//! Strictly convex quadratic programs
//!
//! ```text
//! minimize 1/2 x^T H x + g^T x   subject to   A x <= b
//! ```
//!
//! solved by a primal active-set method. The Hessian is handled through a
//! factor `H = R^T R` and the iteration runs in the variables `z = R x`,
//! where the objective becomes `1/2 |z|^2 + g~^T z` with `g~ = R^{-T} g`.
//! The working-set normals are kept in a QR factorization updated with
//! Givens rotations.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Sparse rows of `A x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequalities {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
}

impl Inequalities {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn from_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::InvalidParameter(format!(
                "A has {} rows but b has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        let mut out = Self::new(a.ncols());
        for i in 0..a.nrows() {
            let row: Vec<(usize, f64)> = (0..a.ncols())
                .filter(|&j| a[(i, j)] != 0.0)
                .map(|j| (j, a[(i, j)]))
                .collect();
            out.push(row, b[i])?;
        }
        Ok(out)
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        if row.iter().any(|&(j, _)| j >= self.n) {
            return Err(Error::InvalidParameter("constraint column out of range".into()));
        }
        self.rows.push(row);
        self.b.push(rhs);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.rows[i].iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// `b - A x`.
    pub fn slacks(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.m()).map(|i| self.b[i] - self.row_dot(i, x)).collect()
    }

    /// `max(0, max_i (A x - b)_i)`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.slacks(x).iter().fold(0.0f64, |acc, &s| acc.max(-s))
    }

    /// `A^T mu`.
    pub fn transpose_mul(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (i, row) in self.rows.iter().enumerate() {
            if mu[i] != 0.0 {
                for &(j, a) in row {
                    out[j] += a * mu[i];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.m(), self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        (a, DVector::from_column_slice(&self.b))
    }
}

/// Factor `R` of the Hessian, `H = R^T R`.
#[derive(Debug, Clone)]
pub enum HessianFactor {
    /// `R = L_H^T` from the Cholesky factor of an explicit `H`.
    Dense { lh: DMatrix<f64> },
    /// `H = 2 (Gamma^{-1} + Phi^T Phi / tau)` given `Gamma = L L^T` and
    /// `I + (Phi L)^T (Phi L) / tau = M M^T`; then `R = sqrt(2) M^T L^{-1}`.
    /// `m = None` stands for `M = I`.
    Gram {
        l: Arc<DMatrix<f64>>,
        m: Option<DMatrix<f64>>,
        scale: f64,
    },
}

impl HessianFactor {
    pub fn from_dense(h: &DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidParameter("H must be square".into()));
        }
        let chol = Cholesky::new(h.clone())
            .ok_or_else(|| Error::InvalidParameter("H is not positive definite".into()))?;
        let lh = chol.l();
        if lh.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("H is not positive definite".into()));
        }
        Ok(Self::Dense { lh })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense { lh } => lh.nrows(),
            Self::Gram { l, .. } => l.nrows(),
        }
    }

    /// `R^{-1} v`.
    pub fn rinv(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense { lh } => {
                let mut x = v.clone();
                lh.tr_solve_lower_triangular_mut(&mut x);
                x
            }
            Self::Gram { l, m, scale } => {
                let mut y = v / *scale;
                if let Some(m) = m {
                    m.tr_solve_lower_triangular_mut(&mut y);
                }
                l.as_ref() * y
            }
        }
    }

    /// `R^{-T} v`.
    pub fn rinv_t(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense { lh } => {
                let mut x = v.clone();
                lh.solve_lower_triangular_mut(&mut x);
                x
            }
            Self::Gram { l, m, scale } => {
                let mut w = l.tr_mul(v) / *scale;
                if let Some(m) = m {
                    m.solve_lower_triangular_mut(&mut w);
                }
                w
            }
        }
    }

    /// `R^{-T} a` for a sparse `a`.
    fn rinv_t_sparse(&self, a: &[(usize, f64)]) -> DVector<f64> {
        match self {
            Self::Dense { lh } => {
                let mut x = DVector::zeros(lh.nrows());
                for &(j, v) in a {
                    x[j] += v;
                }
                lh.solve_lower_triangular_mut(&mut x);
                x
            }
            Self::Gram { l, m, scale } => {
                let n = l.nrows();
                let mut w = DVector::zeros(n);
                for &(j, v) in a {
                    // (L^T e_j)_r = L[j, r], nonzero for r <= j.
                    for r in 0..=j {
                        w[r] += v * l[(j, r)];
                    }
                }
                w /= *scale;
                if let Some(m) = m {
                    m.solve_lower_triangular_mut(&mut w);
                }
                w
            }
        }
    }

    /// `R v`.
    pub fn r(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense { lh } => lh.tr_mul(v),
            Self::Gram { l, m, scale } => {
                let mut y = v.clone();
                l.solve_lower_triangular_mut(&mut y);
                let y = match m {
                    Some(m) => m.tr_mul(&y),
                    None => y,
                };
                y * *scale
            }
        }
    }

    /// `R^T v`.
    pub fn r_t(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense { lh } => lh * v,
            Self::Gram { l, m, scale } => {
                let mut y = match m {
                    Some(m) => m * v,
                    None => v.clone(),
                };
                l.tr_solve_lower_triangular_mut(&mut y);
                y * *scale
            }
        }
    }

    /// Explicit `H = R^T R`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut rmat = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            rmat.set_column(j, &self.r(&e));
        }
        rmat.tr_mul(&rmat)
    }
}

/// `minimize 1/2 x^T H x + g^T x  subject to  A x <= b`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    factor: HessianFactor,
    g: DVector<f64>,
    g_tilde: DVector<f64>,
    cons: Inequalities,
}

impl QpProblem {
    /// Problem with an explicit positive-definite `H` and dense `A`.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let factor = HessianFactor::from_dense(&h)?;
        Self::factored(factor, g, Inequalities::from_dense(&a, &b)?)
    }

    pub fn factored(factor: HessianFactor, g: DVector<f64>, cons: Inequalities) -> Result<Self> {
        Self::check_dims(&factor, &g, &cons)?;
        let g_tilde = factor.rinv_t(&g);
        Ok(Self {
            factor,
            g,
            g_tilde,
            cons,
        })
    }

    /// Problem whose linear term is given as `g~ = R^{-T} g`, avoiding the solve with `R^T`.
    pub fn factored_tilde(
        factor: HessianFactor,
        g_tilde: DVector<f64>,
        cons: Inequalities,
    ) -> Result<Self> {
        Self::check_dims(&factor, &g_tilde, &cons)?;
        let g = factor.r_t(&g_tilde);
        Ok(Self {
            factor,
            g,
            g_tilde,
            cons,
        })
    }

    fn check_dims(factor: &HessianFactor, g: &DVector<f64>, cons: &Inequalities) -> Result<()> {
        let n = factor.dim();
        if g.len() != n || cons.n() != n {
            return Err(Error::InvalidParameter(format!(
                "dimension mismatch: H is {n}x{n}, g has {}, A has {} columns",
                g.len(),
                cons.n()
            )));
        }
        Ok(())
    }

    /// `g~ = R^{-T} g`.
    pub fn g_tilde(&self) -> &DVector<f64> {
        &self.g_tilde
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn factor(&self) -> &HessianFactor {
        &self.factor
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn constraints(&self) -> &Inequalities {
        &self.cons
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        self.factor.hessian()
    }

    /// `1/2 x^T H x + g^T x`, evaluated as `1/2 |z|^2 + g~^T z` with `z = R x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        objective_z(&self.factor.r(x), &self.g_tilde)
    }
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// A feasible starting point; ignored when it violates the constraints.
    pub initial_point: Option<DVector<f64>>,
    /// Constraints to place in the initial working set when active at the start.
    pub warm_start: Option<Vec<usize>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            initial_point: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers, one per constraint row.
    pub mu: DVector<f64>,
    /// Largest of the scaled stationarity, primal infeasibility and complementarity residuals.
    pub kkt_residual: f64,
    /// `|z + g~ + R^{-T} A^T mu|_inf / (1 + |g~|_inf)` with `z = R x`.
    pub stationarity: f64,
    pub primal_infeasibility: f64,
    pub complementarity: f64,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// `1/2 x^T H x + g^T x`.
    pub objective: f64,
    /// Objective after every iteration.
    pub trace: Vec<f64>,
}

/// Variables and constraints seen by the active-set iteration, in the `z = R x` metric.
trait Geometry {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn g_tilde(&self) -> &DVector<f64>;
    /// `R^{-T} a_i`.
    fn row_z(&self, i: usize) -> DVector<f64>;
    fn to_x(&self, p: &DVector<f64>) -> DVector<f64>;
    fn to_z(&self, x: &DVector<f64>) -> DVector<f64>;
    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64;
    fn rhs(&self, i: usize) -> f64;
    fn row_norm(&self, i: usize) -> f64;
    /// `R^{-T} A^T mu`.
    fn adjoint(&self, mu: &DVector<f64>) -> DVector<f64>;
}

struct Plain<'a> {
    p: &'a QpProblem,
    g_tilde: DVector<f64>,
}

impl Geometry for Plain<'_> {
    fn n(&self) -> usize {
        self.p.dim()
    }
    fn m(&self) -> usize {
        self.p.cons.m()
    }
    fn g_tilde(&self) -> &DVector<f64> {
        &self.g_tilde
    }
    fn row_z(&self, i: usize) -> DVector<f64> {
        self.p.factor.rinv_t_sparse(self.p.cons.row(i))
    }
    fn to_x(&self, p: &DVector<f64>) -> DVector<f64> {
        self.p.factor.rinv(p)
    }
    fn to_z(&self, x: &DVector<f64>) -> DVector<f64> {
        self.p.factor.r(x)
    }
    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.p.cons.row_dot(i, x)
    }
    fn rhs(&self, i: usize) -> f64 {
        self.p.cons.b[i]
    }
    fn row_norm(&self, i: usize) -> f64 {
        self.p.cons.row(i).iter().map(|e| e.1.abs()).sum()
    }
    fn adjoint(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.p.factor.rinv_t(&self.p.cons.transpose_mul(mu))
    }
}

/// Plain geometry plus one elastic variable `t >= 0` relaxing every row: `a_i x - t <= b_i`,
/// with a linear penalty `weight * t`.
struct Elastic<'a> {
    inner: &'a Plain<'a>,
    g_tilde: DVector<f64>,
}

impl<'a> Elastic<'a> {
    fn new(inner: &'a Plain<'a>, weight: f64) -> Self {
        let n = inner.n();
        let mut g = DVector::zeros(n + 1);
        g.rows_mut(0, n).copy_from(inner.g_tilde());
        g[n] = weight;
        Self { inner, g_tilde: g }
    }
}

impl Geometry for Elastic<'_> {
    fn n(&self) -> usize {
        self.inner.n() + 1
    }
    fn m(&self) -> usize {
        self.inner.m() + 1
    }
    fn g_tilde(&self) -> &DVector<f64> {
        &self.g_tilde
    }
    fn row_z(&self, i: usize) -> DVector<f64> {
        let n = self.inner.n();
        let mut v = DVector::zeros(n + 1);
        if i < self.inner.m() {
            v.rows_mut(0, n).copy_from(&self.inner.row_z(i));
        }
        v[n] = -1.0;
        v
    }
    fn to_x(&self, p: &DVector<f64>) -> DVector<f64> {
        let n = self.inner.n();
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(&self.inner.to_x(&p.rows(0, n).into_owned()));
        x[n] = p[n];
        x
    }
    fn to_z(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.inner.n();
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(&self.inner.to_z(&x.rows(0, n).into_owned()));
        z[n] = x[n];
        z
    }
    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        let n = self.inner.n();
        if i < self.inner.m() {
            self.inner.p.cons.row(i).iter().map(|&(j, a)| a * x[j]).sum::<f64>() - x[n]
        } else {
            -x[n]
        }
    }
    fn rhs(&self, i: usize) -> f64 {
        if i < self.inner.m() {
            self.inner.rhs(i)
        } else {
            0.0
        }
    }
    fn row_norm(&self, i: usize) -> f64 {
        if i < self.inner.m() {
            self.inner.row_norm(i) + 1.0
        } else {
            1.0
        }
    }
    fn adjoint(&self, mu: &DVector<f64>) -> DVector<f64> {
        let n = self.inner.n();
        let m = self.inner.m();
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n)
            .copy_from(&self.inner.adjoint(&mu.rows(0, m).into_owned()));
        out[n] = -mu.iter().sum::<f64>();
        out
    }
}

/// QR factorization `Q [R_W; 0]` of the working-set normals (as columns).
struct WorkingSet {
    q: DMatrix<f64>,
    rr: DMatrix<f64>,
    rows: Vec<usize>,
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0, a);
    }
    let r = a.hypot(b);
    (a / r, b / r, r)
}

/// `Q <- Q G^T` for a rotation acting on coordinates `(j, j+1)`.
fn rotate_columns(q: &mut DMatrix<f64>, j: usize, c: f64, s: f64) {
    let n = q.nrows();
    for r in 0..n {
        let a = q[(r, j)];
        let b = q[(r, j + 1)];
        q[(r, j)] = c * a + s * b;
        q[(r, j + 1)] = -s * a + c * b;
    }
}

impl WorkingSet {
    fn new(n: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            rr: DMatrix::zeros(n, n),
            rows: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Appends a normal; returns `false` (leaving the set unchanged) when it is
    /// numerically dependent on the current ones.
    fn add(&mut self, row: usize, normal: &DVector<f64>) -> bool {
        let n = self.q.nrows();
        let k = self.len();
        if k >= n {
            return false;
        }
        let mut v = self.q.tr_mul(normal);
        for j in ((k + 1)..n).rev() {
            let (c, s, r) = givens(v[j - 1], v[j]);
            if s == 0.0 {
                continue;
            }
            v[j - 1] = r;
            v[j] = 0.0;
            rotate_columns(&mut self.q, j - 1, c, s);
        }
        if v[k].abs() <= 1e-10 * normal.norm() {
            return false;
        }
        for i in 0..=k {
            self.rr[(i, k)] = v[i];
        }
        self.rows.push(row);
        true
    }

    /// Whether `normal` lies in the span of the current normals.
    fn is_dependent(&self, normal: &DVector<f64>) -> bool {
        let k = self.len();
        let n = self.q.nrows();
        if k >= n {
            return true;
        }
        let rest = self.q.columns(k, n - k).tr_mul(normal);
        rest.norm() <= 1e-10 * normal.norm()
    }

    fn remove(&mut self, pos: usize) {
        let k = self.len();
        for j in pos..(k - 1) {
            for i in 0..=(j + 1) {
                self.rr[(i, j)] = self.rr[(i, j + 1)];
            }
        }
        for i in 0..k {
            self.rr[(i, k - 1)] = 0.0;
        }
        for j in pos..(k - 1) {
            let (c, s, r) = givens(self.rr[(j, j)], self.rr[(j + 1, j)]);
            self.rr[(j, j)] = r;
            self.rr[(j + 1, j)] = 0.0;
            if s != 0.0 {
                for col in (j + 1)..(k - 1) {
                    let a = self.rr[(j, col)];
                    let b = self.rr[(j + 1, col)];
                    self.rr[(j, col)] = c * a + s * b;
                    self.rr[(j + 1, col)] = -s * a + c * b;
                }
                rotate_columns(&mut self.q, j, c, s);
            }
        }
        self.rows.remove(pos);
    }

    /// Null-space step `-Q_2 Q_2^T grad` and the working-set multipliers.
    fn step_and_multipliers(&self, grad: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.q.nrows();
        let k = self.len();
        let mut qt = self.q.tr_mul(grad);
        let mut lambda = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = -qt[i];
            for j in (i + 1)..k {
                s -= self.rr[(i, j)] * lambda[j];
            }
            lambda[i] = s / self.rr[(i, i)];
        }
        for i in 0..k {
            qt[i] = 0.0;
        }
        let p = if k == n {
            DVector::zeros(n)
        } else {
            -(&self.q * qt)
        };
        (p, lambda)
    }
}

struct CoreResult {
    x: DVector<f64>,
    z: DVector<f64>,
    rows: Vec<usize>,
    lambda: DVector<f64>,
    iterations: usize,
    trace: Vec<f64>,
}

fn objective_z(z: &DVector<f64>, g: &DVector<f64>) -> f64 {
    0.5 * z.norm_squared() + g.dot(z)
}

/// Primal active-set iteration from a feasible `x0`.
fn active_set<G: Geometry>(
    geo: &G,
    x0: DVector<f64>,
    initial: &[usize],
    tol: f64,
    max_iter: usize,
) -> Result<CoreResult> {
    let n = geo.n();
    let m = geo.m();
    let gt = geo.g_tilde().clone();
    let gscale = 1.0 + gt.amax();
    let dual_tol = 1e-2 * tol * gscale;

    let mut x = x0;
    let mut z = geo.to_z(&x);
    let mut ws = WorkingSet::new(n);
    let mut in_ws = vec![false; m];
    let mut sorted: Vec<usize> = initial.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for i in sorted {
        if i < m && ws.add(i, &geo.row_z(i)) {
            in_ws[i] = true;
        }
    }

    let mut trace = vec![objective_z(&z, &gt)];
    let mut slack: Vec<f64> = (0..m).map(|i| geo.rhs(i) - geo.row_dot(i, &x)).collect();
    for it in 0..max_iter {
        let grad = &z + &gt;
        let (p, lambda) = ws.step_and_multipliers(&grad);
        let step_tol = 1e-12 * (1.0 + z.amax() + gt.amax());
        if p.amax() <= step_tol {
            let mut drop: Option<(usize, f64)> = None;
            for (pos, &l) in lambda.iter().enumerate() {
                if l < -dual_tol {
                    let better = match drop {
                        None => true,
                        Some((best, bl)) => l < bl || (l == bl && ws.rows[pos] < ws.rows[best]),
                    };
                    if better {
                        drop = Some((pos, l));
                    }
                }
            }
            match drop {
                None => {
                    return Ok(CoreResult {
                        x,
                        z,
                        rows: ws.rows.clone(),
                        lambda,
                        iterations: it,
                        trace,
                    });
                }
                Some((pos, _)) => {
                    in_ws[ws.rows[pos]] = false;
                    ws.remove(pos);
                    continue;
                }
            }
        }

        let px = geo.to_x(&p);
        let pscale = px.amax();
        // Rows dependent on the working set have zero rate along `p` up to roundoff.
        let mut skip = vec![false; m];
        let (alpha, blocking) = loop {
            let mut alpha = 1.0;
            let mut blocking: Option<usize> = None;
            for i in 0..m {
                if in_ws[i] || skip[i] {
                    continue;
                }
                let ap = geo.row_dot(i, &px);
                if ap > 1e-14 * geo.row_norm(i) * pscale {
                    let ratio = slack[i].max(0.0) / ap;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            match blocking {
                Some(i) if ws.is_dependent(&geo.row_z(i)) => skip[i] = true,
                _ => break (alpha, blocking),
            }
        };
        z.axpy(alpha, &p, 1.0);
        x.axpy(alpha, &px, 1.0);
        for (i, s) in slack.iter_mut().enumerate() {
            *s = geo.rhs(i) - geo.row_dot(i, &x);
        }
        if let Some(i) = blocking {
            if ws.add(i, &geo.row_z(i)) {
                in_ws[i] = true;
            }
        }
        trace.push(objective_z(&z, &gt));
    }
    let grad = &z + &gt;
    let (_, lambda) = ws.step_and_multipliers(&grad);
    let mut mu = DVector::zeros(m);
    for (pos, &i) in ws.rows.iter().enumerate() {
        mu[i] = lambda[pos].max(0.0);
    }
    let stat = (&grad + geo.adjoint(&mu)).amax() / gscale;
    Err(Error::MaxIterations {
        iterations: max_iter,
        kkt_residual: stat,
    })
}

fn feasibility_tol(cons: &Inequalities) -> f64 {
    1e-12 * (1.0 + cons.b.iter().fold(0.0f64, |a, &b| a.max(b.abs())))
}

/// Solves the QP. Without a usable initial point, an elastic phase finds a feasible start.
pub fn solve(problem: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    let n = problem.dim();
    let m = problem.cons.m();
    let max_iter = opts.max_iter.unwrap_or(20 * (n + m) + 200);
    let plain = Plain {
        p: problem,
        g_tilde: problem.g_tilde.clone(),
    };
    let ftol = feasibility_tol(&problem.cons);
    let mut iterations = 0;

    let feasible_start = opts
        .initial_point
        .as_ref()
        .filter(|x0| x0.len() == n && problem.cons.max_violation(x0) <= ftol)
        .cloned();

    let (x0, initial) = match feasible_start {
        Some(x0) => {
            let slack = problem.cons.slacks(&x0);
            let active = |i: &usize| slack[*i] <= ftol;
            let initial: Vec<usize> = match &opts.warm_start {
                Some(ws) => ws.iter().copied().filter(|i| *i < m).filter(active).collect(),
                None => (0..m).filter(active).collect(),
            };
            (x0, initial)
        }
        None => {
            let start = opts
                .initial_point
                .as_ref()
                .filter(|x0| x0.len() == n)
                .cloned()
                .unwrap_or_else(|| DVector::zeros(n));
            let (x, rows, its) = elastic_phase(&plain, start, opts.tol, max_iter)?;
            iterations += its;
            (x, rows)
        }
    };

    let core = active_set(&plain, x0, &initial, opts.tol, max_iter)?;
    iterations += core.iterations;
    let trace = core.trace;

    let mut mu = DVector::zeros(m);
    for (pos, &i) in core.rows.iter().enumerate() {
        mu[i] = core.lambda[pos].max(0.0);
    }
    let gscale = 1.0 + plain.g_tilde.amax();
    let stationarity = (&core.z + &plain.g_tilde + plain.adjoint(&mu)).amax() / gscale;
    let slack = problem.cons.slacks(&core.x);
    let primal_infeasibility = slack.iter().fold(0.0f64, |a, &s| a.max(-s));
    let complementarity = slack
        .iter()
        .zip(mu.iter())
        .fold(0.0f64, |a, (&s, &u)| a.max((s * u).abs()))
        / gscale;
    let mut active_set = core.rows.clone();
    active_set.sort_unstable();
    let objective = problem.objective(&core.x);
    Ok(QpSolution {
        x: core.x,
        mu,
        kkt_residual: stationarity.max(primal_infeasibility).max(complementarity),
        stationarity,
        primal_infeasibility,
        complementarity,
        active_set,
        iterations,
        objective,
        trace,
    })
}

/// Minimizes the objective plus a growing penalty on the largest violation until the
/// violation vanishes. Returns a feasible point and the rows active there.
fn elastic_phase(
    plain: &Plain<'_>,
    start: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, Vec<usize>, usize)> {
    let n = plain.n();
    let m = plain.m();
    let cons = &plain.p.cons;
    let ftol = feasibility_tol(cons);
    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(&start);
    x[n] = cons.max_violation(&start);
    let mut weight = 1e2 * (1.0 + plain.g_tilde.abs().sum());
    let mut rows: Vec<usize> = Vec::new();
    let mut iterations = 0;
    for _ in 0..6 {
        let geo = Elastic::new(plain, weight);
        let slack: Vec<f64> = (0..geo.m()).map(|i| geo.rhs(i) - geo.row_dot(i, &x)).collect();
        let initial: Vec<usize> = rows.iter().copied().filter(|&i| slack[i] <= ftol).collect();
        let core = active_set(&geo, x, &initial, tol, max_iter)?;
        iterations += core.iterations;
        x = core.x;
        rows = core.rows;
        let xs = x.rows(0, n).into_owned();
        if cons.max_violation(&xs) <= ftol {
            let kept: Vec<usize> = rows.iter().copied().filter(|&i| i < m).collect();
            return Ok((xs, kept, iterations));
        }
        weight *= 100.0;
    }
    Err(Error::Infeasible {
        max_violation: cons.max_violation(&x.rows(0, n).into_owned()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn unconstrained_closed_form() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            dvector![-2.0, -4.0],
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let s = solve(&p, &QpOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14 && (s.x[1] - 2.0).abs() < 1e-14);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn clipped_scalar() {
        // (x - 2)^2 = x^2 - 4x + 4
        let p = QpProblem::new(dmatrix![2.0], dvector![-4.0], dmatrix![1.0], dvector![1.0]).unwrap();
        let s = solve(&p, &QpOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14);
        assert!((s.mu[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn infeasible_reported() {
        let p = QpProblem::new(
            dmatrix![2.0],
            dvector![0.0],
            dmatrix![1.0; -1.0],
            dvector![-1.0, -1.0],
        )
        .unwrap();
        match solve(&p, &QpOptions::default()) {
            Err(Error::Infeasible { max_violation }) => assert!(max_violation > 0.5),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn working_set_updates_stay_orthogonal() {
        let mut ws = WorkingSet::new(4);
        let normals = [
            dvector![1.0, 2.0, 0.0, 1.0],
            dvector![0.0, 1.0, -1.0, 0.5],
            dvector![3.0, 0.0, 1.0, 0.0],
        ];
        for (i, v) in normals.iter().enumerate() {
            assert!(ws.add(i, v));
        }
        assert!(!ws.add(9, &(&normals[0] + &normals[1])));
        ws.remove(1);
        let qtq = ws.q.tr_mul(&ws.q);
        assert!((qtq - DMatrix::identity(4, 4)).amax() < 1e-14);
        // Columns of Q R reproduce the remaining normals.
        for (pos, &i) in ws.rows.iter().enumerate() {
            let col = &ws.q * ws.rr.column(pos);
            assert!((col - &normals[i]).amax() < 1e-13);
        }
    }
}
