use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use csmooth::diagnostics::{bound_report, Reference};
use csmooth::experiments::config::{Config, RefineKindName};
use csmooth::experiments::plot::write_plots;
use csmooth::experiments::sweep::{converge, replicate_spec, strategy_of};
use csmooth::grid::{DomainF, KnotGrid};
use csmooth::rkhs::RkhsContext;
use csmooth::sampler::replicate;
use csmooth::smoother::{fit_map, read_map_csv, Observations, SmoothingProblem};

const GREEDY_NOTE: &str = "The greedy strategy is a surrogate for MaxMod: among the midpoints of the \
current gaps it inserts the knot whose trial fit moves the MAP most in L2[0, 1]. It is not the \
MaxMod criterion itself.";

#[derive(Parser)]
#[command(name = "csmooth", version, about = "Constrained optimal smoothing with convergence diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sampler.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Adds the documented diagonal jitter to every Gram matrix.
    #[arg(long)]
    jitter: bool,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.sampler.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.output.jitter |= self.jitter;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw constrained GP replicates and their noisy observations.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the MAP to an `x,y` data CSV on an equispaced grid.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Number of equispaced knots.
        #[arg(long, default_value_t = 50)]
        knots: usize,
    },
    /// Bound report for a saved MAP against the reference fit.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// MAP CSV written by `fit`.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Full convergence sweep: CSV, metadata and SVG plots.
    #[command(after_help = GREEDY_NOTE)]
    Converge {
        #[command(flatten)]
        common: Common,
        /// equispaced, greedy or rejection; defaults to `refine.kind`.
        #[arg(long)]
        strategy: Option<String>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample { common } => sample(&common.load()?),
        Command::Fit { common, data, knots } => fit(&common.load()?, &data, knots),
        Command::Diagnose { common, data, fit } => diagnose(&common.load()?, &data, &fit),
        Command::Converge { common, strategy } => run_converge(&common.load()?, strategy.as_deref()),
    }
}

fn sample(cfg: &Config) -> Result<()> {
    let spec = replicate_spec(cfg)?;
    for id in 0..cfg.sweep.replicates {
        replicate(&spec, id)?.save(&spec, &cfg.output.dir)?;
    }
    println!("wrote {} replicates to {}", cfg.sweep.replicates, cfg.output.dir.display());
    Ok(())
}

fn fit(cfg: &Config, data: &Path, knots: usize) -> Result<()> {
    let obs = Observations::read_csv(data, cfg.sampler.tau)?;
    let ctx = RkhsContext::new(cfg.kernel.build()?, KnotGrid::equispaced(knots)?, cfg.output.jitter)?;
    let problem = SmoothingProblem::assemble(ctx, obs, cfg.constraints.build()?)?;
    let sol = fit_map(&problem)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join("map.csv");
    sol.save(&path)?;
    println!(
        "N = {knots}, objective {:.6e}, kkt residual {:.2e}, written to {}",
        sol.objective,
        sol.kkt_residual(),
        path.display()
    );
    Ok(())
}

fn diagnose(cfg: &Config, data: &Path, fit_path: &Path) -> Result<()> {
    let obs = Observations::read_csv(data, cfg.sampler.tau)?;
    let saved = read_map_csv(&std::fs::read_to_string(fit_path)?)?;
    let kernel = cfg.kernel.build()?;
    let cs = cfg.constraints.build()?;
    let ctx = RkhsContext::new(kernel, saved.grid().clone(), cfg.output.jitter)?;
    let problem = SmoothingProblem::assemble(ctx, obs.clone(), cs)?;
    let sol = fit_map(&problem)?;
    let drift = (sol.coeffs.coeffs() - saved.coeffs()).amax();
    if drift > 1e-6 {
        bail!("saved MAP differs from the refit by {drift:.2e}; was it fitted with this config and data?");
    }
    let reference = Reference::fit(kernel, &obs, cs, &DomainF::unit(), cfg.sweep.n_ref, cfg.output.jitter)?;
    let report = bound_report(&problem, &sol, &reference, &kernel.holder_params())?;
    let json = serde_json::json!({ "label": report.label(), "report": report });
    let text = serde_json::to_string_pretty(&json)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    std::fs::write(cfg.output.dir.join("report.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn run_converge(cfg: &Config, strategy: Option<&str>) -> Result<()> {
    let kind = strategy.map(RefineKindName::parse).transpose()?;
    let s = strategy_of(cfg, kind)?;
    let result = converge(cfg, std::slice::from_ref(&s))?;
    let dir = &cfg.output.dir;
    result.save_csv(&dir.join("sweep.csv"))?;
    let meta = serde_json::json!({
        "strategy": s.name(),
        "greedy_criterion": GREEDY_NOTE,
        "reference": format!("constrained fit on {} equispaced knots", cfg.sweep.n_ref),
        "constants": "estimated",
        "config": cfg,
        "failures": result.failures,
    });
    std::fs::write(dir.join("sweep_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    let plots = write_plots(&result, dir, &format!("sup error, {} refinement", s.name()))?;
    for f in &result.failures {
        eprintln!("replicate {} failed: {}", f.0, f.1);
    }
    println!(
        "{} rows, {} failed replicates; wrote {} and {} plots",
        result.rows.len(),
        result.failures.len(),
        dir.join("sweep.csv").display(),
        plots.len()
    );
    Ok(())
}
