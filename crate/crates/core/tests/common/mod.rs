//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=10);
    let m = rng.random_range(0..=12);
    let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = f.tr_mul(&f) + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let xf = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &xf + DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
    Instance { h, g, a, b }
}

/// Enumerates all working sets, keeping the KKT point that is primal and dual feasible.
pub fn enumerate(inst: &Instance) -> DVector<f64> {
    let n = inst.h.nrows();
    let m = inst.a.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&inst.h);
        for j in 0..n {
            rhs[j] = -inst.g[j];
        }
        for (p, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + p, j)] = inst.a[(i, j)];
                kkt[(j, n + p)] = inst.a[(i, j)];
            }
            rhs[n + p] = inst.b[i];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, k).into_owned();
        let feasible = (&inst.a * &x - &inst.b).iter().all(|v| *v <= 1e-9);
        if feasible && lam.iter().all(|l| *l >= -1e-9) {
            let obj = 0.5 * x.dot(&(&inst.h * &x)) + inst.g.dot(&x);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
    }
    best.expect("a feasible strictly convex instance has a KKT point").1
}
