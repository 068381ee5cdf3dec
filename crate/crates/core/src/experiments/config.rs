//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [kernel]
//! family = "matern"          # or "squared_exponential"
//! sigma2 = 1.0
//! lengthscale = 0.4
//! nu = 2.5
//!
//! [constraints]
//! monotone = "increasing"    # or "decreasing"; omit for none
//! bounds = { lower = 0.0, upper = 1.0 }
//!
//! [sampler]
//! N = 200
//! tau = 0.05
//! n_obs = 50
//! seed = 1
//!
//! [refine]
//! kind = "greedy"            # "equispaced", "greedy" or "rejection"
//! N0 = 2
//! Nmax = 250
//! interval = "0:0.3;0.6:1"   # rejection only
//! trial_fits = 4
//!
//! [sweep]
//! replicates = 20
//! N_ref = 1000
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, Monotone};
use crate::error::{Error, Result};
use crate::grid::DomainF;
use crate::kernels::Kernel;

/// Recording schedule for sweeps.
pub const SCHEDULE: [usize; 14] = [2, 3, 5, 8, 10, 12, 18, 27, 40, 60, 90, 135, 200, 250];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Matern,
    SquaredExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: FamilyName,
    #[serde(default = "one")]
    pub sigma2: f64,
    pub lengthscale: f64,
    #[serde(default)]
    pub nu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel> {
        match self.family {
            FamilyName::Matern => {
                let nu = self
                    .nu
                    .ok_or_else(|| Error::Config("kernel.nu is required for the Matérn family".into()))?;
                Kernel::matern(self.sigma2, self.lengthscale, nu)
            }
            FamilyName::SquaredExponential => Kernel::squared_exponential(self.sigma2, self.lengthscale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsConfig {
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub monotone: Option<Monotone>,
}

impl ConstraintsConfig {
    pub fn build(&self) -> Result<ConstraintSet> {
        ConstraintSet::new(self.bounds.map(|b| (b.lower, b.upper)), self.monotone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(rename = "N", default = "default_knots")]
    pub n: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_knots() -> usize {
    crate::sampler::DEFAULT_KNOTS
}

fn default_tau() -> f64 {
    5e-2
}

fn default_n_obs() -> usize {
    crate::sampler::DEFAULT_N_OBS
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n: default_knots(),
            tau: default_tau(),
            n_obs: default_n_obs(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineKindName {
    Equispaced,
    Greedy,
    Rejection,
}

impl RefineKindName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "equispaced" => Ok(Self::Equispaced),
            "greedy" => Ok(Self::Greedy),
            "rejection" => Ok(Self::Rejection),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected equispaced, greedy or rejection)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Equispaced => "equispaced",
            Self::Greedy => "greedy",
            Self::Rejection => "rejection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    #[serde(default = "default_kind")]
    pub kind: RefineKindName,
    #[serde(rename = "N0", default = "default_n0")]
    pub n0: usize,
    #[serde(rename = "Nmax", default = "default_nmax")]
    pub nmax: usize,
    #[serde(default)]
    pub interval: Option<String>,
    #[serde(default = "default_trial_fits")]
    pub trial_fits: usize,
}

fn default_kind() -> RefineKindName {
    RefineKindName::Greedy
}

fn default_n0() -> usize {
    2
}

fn default_nmax() -> usize {
    250
}

fn default_trial_fits() -> usize {
    4
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            n0: default_n0(),
            nmax: default_nmax(),
            interval: None,
            trial_fits: default_trial_fits(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(rename = "N_ref", default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
}

fn default_replicates() -> usize {
    20
}

fn default_n_ref() -> usize {
    crate::diagnostics::N_REF
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            replicates: default_replicates(),
            n_ref: default_n_ref(),
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Record wall time per row; off by default so reruns give identical bytes.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub jitter: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            timing: false,
            jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kernel: KernelConfig,
    #[serde(default)]
    pub constraints: ConstraintsConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.build()?;
        self.constraints.build()?;
        if !(self.sampler.tau > 0.0) {
            return Err(Error::Config("sampler.tau must be positive".into()));
        }
        if self.sampler.n < 2 {
            return Err(Error::Config("sampler.N must be at least 2".into()));
        }
        if self.refine.n0 < 2 || self.refine.nmax < self.refine.n0 {
            return Err(Error::Config("need 2 <= refine.N0 <= refine.Nmax".into()));
        }
        if self.refine.trial_fits == 0 {
            return Err(Error::Config("refine.trial_fits must be at least 1".into()));
        }
        if self.refine.kind == RefineKindName::Rejection {
            self.interval()?;
        }
        if self.sweep.n_ref < 2 {
            return Err(Error::Config("sweep.N_ref must be at least 2".into()));
        }
        Ok(())
    }

    /// The rejection interval `I`.
    pub fn interval(&self) -> Result<DomainF> {
        let text = self
            .refine
            .interval
            .as_deref()
            .ok_or_else(|| Error::Config("refine.interval is required for rejection".into()))?;
        DomainF::from_text(text)
    }

    /// Recording schedule clipped to `[N0, Nmax]`, always ending at `Nmax`.
    pub fn schedule(&self) -> Vec<usize> {
        let base: Vec<usize> = self.sweep.schedule.clone().unwrap_or_else(|| SCHEDULE.to_vec());
        let mut s: Vec<usize> = base
            .into_iter()
            .filter(|&n| n >= self.refine.n0 && n <= self.refine.nmax)
            .collect();
        if s.last() != Some(&self.refine.nmax) {
            s.push(self.refine.nmax);
        }
        s.sort_unstable();
        s.dedup();
        s
    }

    /// The dense boundedness plus monotonicity setting of the fixed-regularity experiment.
    pub fn dense_monotone() -> Self {
        Self {
            kernel: KernelConfig {
                family: FamilyName::Matern,
                sigma2: 1.0,
                lengthscale: 0.4,
                nu: Some(2.5),
            },
            constraints: ConstraintsConfig {
                bounds: Some(BoundsConfig { lower: 0.0, upper: 1.0 }),
                monotone: Some(Monotone::Increasing),
            },
            sampler: SamplerConfig::default(),
            refine: RefineConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}
