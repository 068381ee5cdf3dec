//! Convergence sweeps over replicates.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use super::config::{Config, RefineKindName};
use super::refine::{FitSetup, Fitted, Refiner, Strategy};
use crate::diagnostics::{bound_report, BoundReport, Reference};
use crate::error::{Error, Result};
use crate::grid::{DomainF, KnotGrid};
use crate::sampler::{derive_seed, replicate, Replicate, ReplicateSpec};

pub const CSV_HEADER: &str =
    "replicate_id,strategy,N,delta_N,sup_error,G_N,alpha_est,bound56,objective,kkt_residual,wall_time_ms";

/// One recorded `(replicate, N)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub replicate_id: usize,
    pub strategy: String,
    pub n: usize,
    pub delta_n: f64,
    pub sup_error: f64,
    pub g_n: f64,
    pub alpha_est: f64,
    pub bound56: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub wall_time_ms: u64,
    pub report: BoundReport,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.replicate_id,
            self.strategy,
            self.n,
            self.delta_n,
            self.sup_error,
            self.g_n,
            self.alpha_est,
            self.bound56,
            self.objective,
            self.kkt_residual,
            self.wall_time_ms
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Replicates that failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

impl SweepResult {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn strategies(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|r| r.strategy.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Per-N medians and quartiles for one strategy.
    pub fn summary(&self, strategy: &str) -> Vec<SummaryRow> {
        let mut ns: Vec<usize> = self.rows.iter().filter(|r| r.strategy == strategy).map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.into_iter()
            .map(|n| {
                let sel: Vec<&SweepRow> = self.rows.iter().filter(|r| r.strategy == strategy && r.n == n).collect();
                let col = |f: fn(&SweepRow) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
                let err = col(|r| r.sup_error);
                SummaryRow {
                    n,
                    count: sel.len(),
                    error_q25: quantile(&err, 0.25),
                    error_median: quantile(&err, 0.5),
                    error_q75: quantile(&err, 0.75),
                    delta_median: quantile(&col(|r| r.delta_n), 0.5),
                    alpha_median: quantile(&col(|r| r.alpha_est), 0.5),
                    bound56_median: quantile(&col(|r| r.bound56), 0.5),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub count: usize,
    pub error_q25: f64,
    pub error_median: f64,
    pub error_q75: f64,
    pub delta_median: f64,
    pub alpha_median: f64,
    pub bound56_median: f64,
}

/// Linear-interpolated sample quantile; `NaN` for an empty sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Strategy described by a config, optionally overridden by name.
pub fn strategy_of(cfg: &Config, kind: Option<RefineKindName>) -> Result<Strategy> {
    Ok(match kind.unwrap_or(cfg.refine.kind) {
        RefineKindName::Equispaced => Strategy::Equispaced,
        RefineKindName::Greedy => Strategy::Greedy {
            trial_fits: cfg.refine.trial_fits,
        },
        RefineKindName::Rejection => Strategy::Rejection {
            interval: cfg.interval()?,
        },
    })
}

/// Replicate settings derived from a config.
pub fn replicate_spec(cfg: &Config) -> Result<ReplicateSpec> {
    let mut spec = ReplicateSpec::new(cfg.kernel.build()?, cfg.constraints.build()?, cfg.sampler.seed)?;
    spec.grid = KnotGrid::equispaced(cfg.sampler.n)?;
    spec.n_obs = cfg.sampler.n_obs;
    spec.tau = cfg.sampler.tau;
    spec.jitter = cfg.output.jitter;
    Ok(spec)
}

/// Refinement trace of one replicate, one row per scheduled `N`.
pub fn run_replicate(cfg: &Config, strategy: &Strategy, rep: &Replicate) -> Result<Vec<SweepRow>> {
    let kernel = cfg.kernel.build()?;
    let cs = cfg.constraints.build()?;
    let jitter = cfg.output.jitter;
    let domain = DomainF::unit();
    let obs = &rep.observations;
    let reference = Reference::fit(kernel, obs, cs, &domain, cfg.sweep.n_ref, jitter)?;
    let holder = kernel.holder_params();
    let setup = FitSetup {
        kernel,
        obs,
        cs,
        jitter,
    };

    let mut refiner = Refiner::new(
        strategy.clone(),
        cfg.refine.nmax,
        derive_seed(derive_seed(cfg.sampler.seed, rep.id as u64 + 1), 4),
    );
    let mut grid = refiner.initial_grid(cfg.refine.n0, &domain)?;
    let mut fitted: Option<Fitted> = None;
    let mut rows = Vec::new();
    for target in cfg.schedule() {
        let clock = Instant::now();
        let (g, f) = refiner.advance(grid, fitted, target, &setup)?;
        let cur = match f {
            Some(f) => f,
            None => setup.fit(&g)?,
        };
        let report = bound_report(&cur.problem, &cur.fit, &reference, &holder)?;
        if !(report.sup_error <= report.bounds.bound56) {
            return Err(Error::BoundViolated {
                n: g.len(),
                sup_error: report.sup_error,
                bound: report.bounds.bound56,
                dump: serde_json::to_string(&report).unwrap_or_default(),
            });
        }
        let wall_time_ms = if cfg.output.timing {
            clock.elapsed().as_millis() as u64
        } else {
            0
        };
        rows.push(SweepRow {
            replicate_id: rep.id,
            strategy: strategy.name().to_string(),
            n: g.len(),
            delta_n: report.delta_n,
            sup_error: report.sup_error,
            g_n: report.g_n,
            alpha_est: report.alpha_n,
            bound56: report.bounds.bound56,
            objective: cur.fit.objective,
            kkt_residual: cur.fit.kkt_residual(),
            wall_time_ms,
            report,
        });
        grid = g;
        fitted = Some(cur);
    }
    Ok(rows)
}

/// Runs every replicate with each strategy, in parallel across replicates.
pub fn converge(cfg: &Config, strategies: &[Strategy]) -> Result<SweepResult> {
    cfg.validate()?;
    let spec = replicate_spec(cfg)?;
    let total = cfg.sweep.replicates;
    let next = AtomicUsize::new(0);
    let out: Mutex<SweepResult> = Mutex::new(SweepResult::default());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::Relaxed);
                if id >= total {
                    break;
                }
                let outcome = replicate(&spec, id).and_then(|rep| {
                    let mut rows = Vec::new();
                    for s in strategies {
                        rows.extend(run_replicate(cfg, s, &rep)?);
                    }
                    Ok(rows)
                });
                let mut guard = out.lock().expect("sweep mutex poisoned");
                match outcome {
                    Ok(rows) => guard.rows.extend(rows),
                    Err(e) => guard.failures.push((id, e.to_string())),
                }
            });
        }
    });
    let mut result = out.into_inner().expect("sweep mutex poisoned");
    result
        .rows
        .sort_by(|a, b| (a.replicate_id, &a.strategy, a.n).cmp(&(b.replicate_id, &b.strategy, b.n)));
    result.failures.sort();
    Ok(result)
}
