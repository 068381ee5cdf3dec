use csmooth::grid::{DomainF, KnotGrid, PiecewiseLinear};
use csmooth::kernels::{Kernel, KernelFamily};
use csmooth::rkhs::{norm_hf_estimate, RkhsContext};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernels() -> Vec<Kernel> {
    vec![
        Kernel::matern(1.0, 0.4, 0.5).unwrap(),
        Kernel::matern(1.0, 0.4, 2.5).unwrap(),
        Kernel::squared_exponential(1.0, 0.4).unwrap(),
    ]
}

fn needs_jitter(k: &Kernel) -> bool {
    matches!(k.family(), KernelFamily::SquaredExponential)
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> KnotGrid {
    let mut k: Vec<f64> = (0..n - 2).map(|_| rng.random_range(0.001..0.999)).collect();
    k.push(0.0);
    k.push(1.0);
    k.sort_by(f64::total_cmp);
    k.dedup();
    KnotGrid::new(k, DomainF::unit()).unwrap()
}

#[test]
fn isometry_on_random_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in kernels() {
        for n in [5usize, 20, 50] {
            let ctx = RkhsContext::new(k, KnotGrid::equispaced(n).unwrap(), needs_jitter(&k)).unwrap();
            for _ in 0..100 {
                let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let v = PiecewiseLinear::new(ctx.grid().clone(), c).unwrap();
                let nn = ctx.norm(&v).unwrap().powi(2);
                let h = ctx.interpolant(&v).unwrap();
                assert!((h.hf_norm_sq() - nn).abs() <= 1e-8 * nn, "{k:?} n={n}");
                if !needs_jitter(&k) {
                    let w = h.weights();
                    let explicit = w.dot(&(ctx.gram().matrix() * w));
                    assert!((explicit - nn).abs() <= 1e-8 * nn, "{k:?} n={n}");
                }
            }
        }
    }
}

#[test]
fn reproducing_property_at_knots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in kernels().into_iter().filter(|k| !needs_jitter(k)) {
        let ctx = RkhsContext::new(k, random_grid(&mut rng, 12), needs_jitter(&k)).unwrap();
        let c = DVector::from_fn(ctx.grid().len(), |_, _| rng.random_range(-1.0..1.0));
        let v = PiecewiseLinear::new(ctx.grid().clone(), c.clone()).unwrap();
        for (j, &t) in ctx.grid().knots().iter().enumerate() {
            let sec = ctx.kernel_section(t);
            assert!((ctx.inner(&v, &sec).unwrap() - c[j]).abs() <= 1e-10);
        }
        // Column of the Gram matrix as coefficients: <u, v>_N = v(t_i).
        let col = ctx.gram().matrix().column(3).into_owned();
        let u = PiecewiseLinear::new(ctx.grid().clone(), col).unwrap();
        assert!((ctx.inner(&u, &v).unwrap() - c[3]).abs() <= 1e-10);
    }
}

#[test]
fn kernel_section_norm_is_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in kernels() {
        let ctx = RkhsContext::new(k, random_grid(&mut rng, 15), needs_jitter(&k)).unwrap();
        for _ in 0..20 {
            let t: f64 = rng.random();
            let s = ctx.kernel_section(t);
            let nsq = ctx.norm(&s).unwrap().powi(2);
            assert!((nsq - ctx.kernel_kn(t, t)).abs() <= 1e-9, "{k:?}");
            let xp: f64 = rng.random();
            assert_eq!(ctx.kernel_kn(t, xp), ctx.kernel_kn(xp, t));
        }
    }
}

#[test]
fn interpolant_of_kernel_section() {
    let k = Kernel::matern(1.0, 0.4, 2.5).unwrap();
    let ctx = RkhsContext::new(k, KnotGrid::equispaced(9).unwrap(), false).unwrap();
    let audit = ctx.grid().audit_points();
    for &t in &[0.125, 0.3, 0.77] {
        let h = ctx.interpolant(&ctx.kernel_section(t)).unwrap();
        let nb = ctx.grid().neighbors(t);
        for &s in audit.iter().step_by(7) {
            let expected = nb.w_lo * k.eval(s, nb.lo) + nb.w_hi * k.eval(s, nb.hi);
            assert!((h.eval(s) - expected).abs() <= 1e-12);
        }
    }
    // A knot section has indicator weights.
    let h = ctx.interpolant(&ctx.kernel_section(0.5)).unwrap();
    for (i, w) in h.weights().iter().enumerate() {
        let e = if i == 4 { 1.0 } else { 0.0 };
        assert!((w - e).abs() < 1e-9);
    }
}

#[test]
fn interpolant_matches_values_at_knots() {
    let k = Kernel::matern(1.0, 0.4, 1.5).unwrap();
    let grid = KnotGrid::new(vec![0.0, 0.2, 0.45, 0.8, 1.0], DomainF::unit()).unwrap();
    let ctx = RkhsContext::new(k, grid.clone(), false).unwrap();
    let c = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, 0.1]);
    let h = ctx.interpolant(&PiecewiseLinear::new(grid.clone(), c.clone()).unwrap()).unwrap();
    for (j, &t) in grid.knots().iter().enumerate() {
        assert!((h.eval(t) - c[j]).abs() <= 1e-12);
    }
}

#[test]
fn norm_estimate_of_kernel_section() {
    let k = Kernel::matern(1.0, 0.4, 2.5).unwrap();
    let f = |t: f64| k.eval(t, 0.5);
    let coarse = norm_hf_estimate(&k, f, &KnotGrid::equispaced(100).unwrap(), false).unwrap();
    let fine = norm_hf_estimate(&k, f, &KnotGrid::equispaced(1000).unwrap(), false).unwrap();
    assert!(coarse <= fine + 1e-9);
    assert!(fine <= 1.0 + 1e-9);
    assert!(fine >= 0.98, "estimate {fine}");
    assert_eq!(norm_hf_estimate(&k, |_| 0.0, &KnotGrid::equispaced(50).unwrap(), false).unwrap(), 0.0);
}

#[test]
fn embedding_witness_bounds_sup_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = Kernel::matern(1.7, 0.4, 2.5).unwrap();
    let ctx = RkhsContext::new(k, KnotGrid::equispaced(20).unwrap(), false).unwrap();
    let audit = ctx.grid().audit_points();
    let c = ctx.embedding_witness(&audit);
    assert!(c >= 1.7f64.sqrt());
    for _ in 0..20 {
        let coeffs = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let v = PiecewiseLinear::new(ctx.grid().clone(), coeffs).unwrap();
        let sup = audit.iter().map(|&t| v.eval(t).abs()).fold(0.0, f64::max);
        assert!(sup <= c * ctx.norm(&v).unwrap() + 1e-12);
    }
}
