use csmooth::grid::{DomainF, KnotGrid, PiecewiseLinear};
use nalgebra::DVector;
use proptest::prelude::*;

fn sorted_knots() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.001f64..0.999, 0..30).prop_map(|mut v| {
        v.push(0.0);
        v.push(1.0);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    })
}

fn holes() -> DomainF {
    DomainF::new(vec![(0.0, 0.3), (0.6, 1.0)]).unwrap()
}

proptest! {
    #[test]
    fn partition_of_unity(knots in sorted_knots(), t in 0.0f64..=1.0) {
        let g = KnotGrid::new(knots, DomainF::unit()).unwrap();
        let s: f64 = (0..g.len()).map(|i| g.hat_eval(i, t)).sum();
        prop_assert!((s - 1.0).abs() <= 1e-15);
        for i in 0..g.len() {
            let v = g.hat_eval(i, t);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn neighbor_weights_sum_to_one(knots in sorted_knots(), t in 0.0f64..=1.0) {
        let g = KnotGrid::new(knots, DomainF::unit()).unwrap();
        let nb = g.neighbors(t);
        prop_assert!((nb.w_lo + nb.w_hi - 1.0).abs() <= 1e-15);
        prop_assert!(nb.lo <= t && t <= nb.hi);
    }

    #[test]
    fn projection_is_idempotent(knots in sorted_knots(), a in -3.0f64..3.0, b in 0.1f64..20.0) {
        let g = KnotGrid::new(knots, DomainF::unit()).unwrap();
        let f = |t: f64| (b * t).sin() + a * t * t;
        let p = g.project(f);
        let pp = g.project(|t| p.eval(t));
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            prop_assert!((pp.eval(t) - p.eval(t)).abs() <= 1e-14);
        }
    }

    #[test]
    fn evaluation_at_knots_is_exact(knots in sorted_knots(), seed in any::<u64>()) {
        let g = KnotGrid::new(knots, DomainF::unit()).unwrap();
        let c = DVector::from_fn(g.len(), |i, _| ((seed.wrapping_mul(i as u64 + 7)) % 1000) as f64 / 37.0);
        let u = PiecewiseLinear::new(g.clone(), c.clone()).unwrap();
        for (j, &t) in g.knots().iter().enumerate() {
            prop_assert_eq!(u.eval(t), c[j]);
        }
    }

    #[test]
    fn extension_is_linear_and_lipschitz(
        cu in proptest::collection::vec(-2.0f64..2.0, 6),
        cv in proptest::collection::vec(-2.0f64..2.0, 6),
        alpha in -2.0f64..2.0, gamma in -2.0f64..2.0, t in 0.0f64..=1.0,
    ) {
        let g = KnotGrid::new(vec![0.0, 0.1, 0.3, 0.6, 0.75, 1.0], holes()).unwrap();
        let u = PiecewiseLinear::new(g.clone(), DVector::from_vec(cu.clone())).unwrap();
        let v = PiecewiseLinear::new(g.clone(), DVector::from_vec(cv.clone())).unwrap();
        let f = g.domain();
        let lhs = f.extend(|s| alpha * u.eval(s) + gamma * v.eval(s), t);
        let rhs = alpha * u.eval_extended(t) + gamma * v.eval_extended(t);
        prop_assert!((lhs - rhs).abs() <= 1e-13);
        let sup_f = g.audit_points().iter().map(|&s| (u.eval(s) - v.eval(s)).abs()).fold(0.0, f64::max);
        prop_assert!((u.eval_extended(t) - v.eval_extended(t)).abs() <= sup_f + 1e-14);
    }

    #[test]
    fn refinement_never_increases_delta(knots in sorted_knots(), extra in proptest::collection::vec(0.0f64..=1.0, 1..10)) {
        let mut g = KnotGrid::new(knots, DomainF::unit()).unwrap();
        for t in extra {
            if let Ok(r) = g.refine(t) {
                prop_assert!(r.delta() <= g.delta());
                g = r;
            }
        }
        prop_assert!(g.is_nested());
    }
}

#[test]
fn delta_halves_under_dyadic_refinement() {
    for f in [DomainF::unit(), holes()] {
        let mut g = KnotGrid::new(vec![0.0, 1.0], f.clone()).unwrap();
        let mut prev = g.delta();
        for _ in 0..8 {
            let mut mids = Vec::new();
            for &(a, b) in f.intervals() {
                let mut pts: Vec<f64> = g.knots().iter().copied().filter(|&k| a <= k && k <= b).collect();
                pts.insert(0, a);
                pts.push(b);
                pts.dedup();
                mids.extend(pts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            }
            for t in mids {
                g = g.refine(t).unwrap();
            }
            let d = g.delta();
            assert!(d <= prev);
            prev = d;
        }
        assert!(prev < 0.01, "delta after refinement: {prev}");
    }
}

#[test]
fn equispaced_delta_formula() {
    for n in [2usize, 3, 5, 10, 250] {
        let d = KnotGrid::equispaced(n).unwrap().delta();
        assert!((d - 1.0 / (2.0 * (n - 1) as f64)).abs() < 1e-15);
    }
}

#[test]
fn audit_points_cover_each_interval() {
    let g = KnotGrid::new(vec![0.0, 0.1234567, 0.6, 1.0], holes()).unwrap();
    let pts = g.audit_points();
    assert!(pts.contains(&0.1234567));
    assert_eq!(pts.len(), 2 * 2001 + 1);
    assert!(pts.iter().all(|&t| holes().contains(t)));
}
