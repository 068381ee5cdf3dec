use csmooth::constraints::{ConstraintSet, Monotone};
use csmooth::experiments::config::{Config, RefineKindName};
use csmooth::experiments::refine::{gap_midpoints, greedy_step, l2_distance, rejection_step, shortlist, Candidate};
use csmooth::experiments::sweep::{converge, quantile, strategy_of, CSV_HEADER};
use csmooth::experiments::{FitSetup, Refiner, Strategy};
use csmooth::grid::{DomainF, KnotGrid, PiecewiseLinear};
use csmooth::kernels::Kernel;
use csmooth::rkhs::RkhsContext;
use csmooth::smoother::{fit_map, Observations, SmoothingProblem};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn holed() -> DomainF {
    DomainF::new(vec![(0.0, 0.3), (0.6, 1.0)]).unwrap()
}

fn steep_data() -> Observations {
    let x: Vec<f64> = (0..30).map(|i| (i as f64 + 0.5) / 30.0).collect();
    let y = x.iter().map(|&t| 1.0 / (1.0 + (-(t - 0.7) * 30.0).exp())).collect();
    Observations::new(x, y, 1e-3).unwrap()
}

fn small_config() -> Config {
    let mut cfg = Config::dense_monotone();
    cfg.sampler.n = 40;
    cfg.sampler.n_obs = 15;
    cfg.sampler.seed = 11;
    cfg.refine.nmax = 12;
    cfg.sweep.replicates = 2;
    cfg.sweep.n_ref = 80;
    cfg
}

#[test]
fn equispaced_three_knots() {
    let obs = steep_data();
    let setup = FitSetup {
        kernel: Kernel::matern(1.0, 0.4, 2.5).unwrap(),
        obs: &obs,
        cs: ConstraintSet::new(Some((0.0, 1.0)), None).unwrap(),
        jitter: false,
    };
    let mut r = Refiner::new(Strategy::Equispaced, 10, 0);
    let g = r.initial_grid(2, &DomainF::unit()).unwrap();
    let (g, _) = r.advance(g, None, 3, &setup).unwrap();
    assert_eq!(g.knots(), &[0.0, 0.5, 1.0]);
    assert!(r.advance(g, None, 11, &setup).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rejection_inserts_only_inside_interval(seed in any::<u64>(), steps in 1usize..60) {
        let domain = holed();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = KnotGrid::spread_over(&DomainF::unit(), 2).unwrap();
        let before: Vec<f64> = g.knots().to_vec();
        for _ in 0..steps {
            g = rejection_step(&g, &domain, &mut rng).unwrap();
        }
        prop_assert_eq!(g.len(), 2 + steps);
        for &t in g.knots() {
            prop_assert!(before.contains(&t) || domain.contains(t), "{} outside I", t);
        }
    }

    #[test]
    fn midpoints_lie_in_gaps_and_domain(mut knots in prop::collection::vec(0.0f64..1.0, 1..12)) {
        knots.retain(|&t| holed().contains(t));
        knots.push(0.0);
        knots.push(1.0);
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let g = KnotGrid::from_knots(knots, holed()).unwrap();
        for (pos, m, w) in gap_midpoints(&g) {
            prop_assert!(g.knots()[pos] < m && m < g.knots()[pos + 1]);
            prop_assert!(holed().contains(m));
            prop_assert!(w > 0.0 && w <= g.knots()[pos + 1] - g.knots()[pos]);
        }
    }

    #[test]
    fn l2_distance_matches_quadrature(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 6)) {
        let fa = PiecewiseLinear::new(KnotGrid::equispaced(4).unwrap(), DVector::from_vec(a)).unwrap();
        let fb = PiecewiseLinear::new(KnotGrid::equispaced(6).unwrap(), DVector::from_vec(b)).unwrap();
        // Midpoint rule on 60000 cells; the integrand is piecewise quadratic.
        let m = 60_000;
        let s: f64 = (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) / m as f64;
                let d = fa.eval(t) - fb.eval(t);
                d * d
            })
            .sum::<f64>() / m as f64;
        prop_assert!((l2_distance(&fa, &fb) - s.sqrt()).abs() < 1e-6);
    }
}

#[test]
fn gap_midpoints_clip_to_domain() {
    let g = KnotGrid::from_knots(vec![0.0, 0.2, 0.7, 1.0], holed()).unwrap();
    let mids: Vec<(usize, f64)> = gap_midpoints(&g).into_iter().map(|(p, m, _)| (p, m)).collect();
    let want = [(0, 0.1), (1, 0.25), (1, 0.65), (2, 0.85)];
    assert_eq!(mids.len(), want.len());
    for ((p, m), (wp, wm)) in mids.iter().zip(want) {
        assert_eq!(*p, wp);
        assert!((m - wm).abs() < 1e-15);
    }
}

#[test]
fn shortlist_keeps_widest_gap() {
    let c = |w: f64, s: f64| Candidate {
        position: 0,
        knot: 0.5,
        width: w,
        prescreen: s,
    };
    let cands = vec![c(0.1, 3.0), c(0.5, 0.0), c(0.1, 2.0), c(0.1, 1.0), c(0.1, 5.0)];
    assert_eq!(shortlist(&cands, 3), vec![0, 1, 4]);
    assert_eq!(shortlist(&cands, 1), vec![4]);
    assert_eq!(shortlist(&cands, 9), vec![0, 1, 2, 3, 4]);
}

#[test]
fn greedy_step_matches_exhaustive_scoring() {
    // Six knots give five candidate gaps; every candidate is refit from scratch here.
    let kernel = Kernel::matern(1.0, 0.4, 2.5).unwrap();
    let cs = ConstraintSet::new(Some((0.0, 1.0)), Some(Monotone::Increasing)).unwrap();
    let obs = steep_data();
    let grid = KnotGrid::equispaced(6).unwrap();
    let fit = |g: &KnotGrid| {
        let p = SmoothingProblem::assemble(RkhsContext::new(kernel, g.clone(), false).unwrap(), obs.clone(), cs).unwrap();
        fit_map(&p).unwrap().coeffs
    };
    let base = fit(&grid);
    let mut scores = Vec::new();
    for i in 0..5 {
        let t = (i as f64 + 0.5) / 5.0;
        let next = fit(&grid.refine(t).unwrap());
        let m = 50_000;
        let s: f64 = (0..m)
            .map(|k| {
                let x = (k as f64 + 0.5) / m as f64;
                (next.eval(x) - base.eval(x)).powi(2)
            })
            .sum::<f64>() / m as f64;
        scores.push((t, s.sqrt()));
    }
    let best = scores.iter().copied().fold((f64::NAN, -1.0), |a, b| if b.1 > a.1 { b } else { a });

    let setup = FitSetup {
        kernel,
        obs: &obs,
        cs,
        jitter: false,
    };
    let cur = setup.fit(&grid).unwrap();
    let (chosen, score) = greedy_step(&cur, 5).unwrap();
    let inserted: Vec<f64> = chosen.grid().knots().iter().copied().filter(|t| !grid.knots().contains(t)).collect();
    assert_eq!(inserted.len(), 1);
    assert!((inserted[0] - best.0).abs() < 1e-12, "greedy {} exhaustive {:?}", inserted[0], scores);
    assert!((score - best.1).abs() < 1e-5 * best.1.max(1e-3));
}

#[test]
fn quantiles() {
    assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    assert!(quantile(&[], 0.5).is_nan());
}

#[test]
fn sweep_csv_is_deterministic_and_well_formed() {
    let cfg = small_config();
    let s = [strategy_of(&cfg, None).unwrap()];
    let a = converge(&cfg, &s).unwrap();
    let b = converge(&cfg, &s).unwrap();
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    let text = a.to_csv_string();
    assert_eq!(text, b.to_csv_string());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 2 * cfg.schedule().len());

    for id in 0..2 {
        let trace: Vec<_> = a.rows.iter().filter(|r| r.replicate_id == id).collect();
        let ns: Vec<usize> = trace.iter().map(|r| r.n).collect();
        assert_eq!(ns, cfg.schedule());
        for w in trace.windows(2) {
            assert!(w[1].delta_n <= w[0].delta_n);
        }
        for r in &trace {
            assert!(r.delta_n > 0.0);
            assert!(r.sup_error <= r.bound56);
            assert!(r.kkt_residual <= 1e-8);
            assert_eq!(r.wall_time_ms, 0);
        }
    }
}

#[test]
fn rejection_sweep_stays_in_interval() {
    let mut cfg = small_config();
    cfg.constraints.monotone = None;
    cfg.refine.interval = Some("0:0.3;0.6:1".into());
    cfg.output.jitter = true;
    let s = strategy_of(&cfg, Some(RefineKindName::Rejection)).unwrap();
    let res = converge(&cfg, &[s]).unwrap();
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    for r in &res.rows {
        // The hole (0.3, 0.6) never receives a knot, so delta_N stays at least 0.15.
        assert!(r.delta_n >= 0.15 - 1e-12);
        assert_eq!(r.strategy, "rejection");
    }
}

#[test]
fn failing_replicates_are_recorded() {
    let mut cfg = small_config();
    cfg.kernel = csmooth::experiments::config::KernelConfig {
        family: csmooth::experiments::config::FamilyName::SquaredExponential,
        sigma2: 1.0,
        lengthscale: 0.4,
        nu: None,
    };
    let res = converge(&cfg, &[Strategy::Greedy { trial_fits: 2 }]).unwrap();
    assert_eq!(res.failures.iter().map(|f| f.0).collect::<Vec<_>>(), vec![0, 1]);
    assert!(res.rows.is_empty());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(cfg.refine.nmax, 250);
            assert_eq!(cfg.sweep.n_ref, 1000);
            seen += 1;
        }
    }
    assert_eq!(seen, 7);
}

#[test]
fn sweep_files_are_written() {
    let cfg = small_config();
    let res = converge(&cfg, &[Strategy::Equispaced]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    res.save_csv(&dir.path().join("nested/sweep.csv")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("nested/sweep.csv")).unwrap();
    assert_eq!(csv, res.to_csv_string());
    let files = csmooth::experiments::plot::write_plots(&res, dir.path(), "equispaced").unwrap();
    assert_eq!(files.len(), 2);
    let svg = std::fs::read_to_string(dir.path().join("convergence_equispaced.svg")).unwrap();
    let summary = res.summary("equispaced");
    assert_eq!(summary.len(), cfg.schedule().len());
    assert!(summary.iter().all(|r| r.count == 2));
    assert!(svg.contains(&format!("equispaced,12,2,{:.6e}", summary.last().unwrap().error_q25)));
}
