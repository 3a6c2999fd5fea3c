//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dproj_core::problems::GeneratorSpec;
use dproj_core::solvers::{SolverConfig, Variant};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level experiment description.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Load the problem from this snapshot instead of `problem`.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub problem: Option<GeneratorSpec>,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub sweep: Vec<SweepEntry>,
}

fn default_reference_tol() -> f64 {
    1e-10
}

fn default_repetitions() -> u32 {
    1
}

fn default_eps() -> f64 {
    1e-6
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    DpSgd,
    DpSvrg,
    DpAsvrg,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::DpSgd => Variant::DpSgd,
            VariantName::DpSvrg => Variant::DpSvrg,
            VariantName::DpAsvrg => Variant::DpAsvrg,
        }
    }
}

/// One solver run of a sweep.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub label: String,
    pub variant: VariantName,
    pub gap: usize,
    /// Iterations of DP-SGD.
    #[serde(default)]
    pub total_iters: Option<usize>,
    /// Inner iterations per stage of the variance-reduced solvers.
    #[serde(default)]
    pub inner_m: Option<usize>,
    #[serde(default)]
    pub stages: Option<usize>,
    /// Fixed step size; the theory default when absent.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Mini-batch size; absent means full gradients.
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Fixed momentum weight for DP-ASVRG.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Run the worker-level local method on a federated problem.
    #[serde(default)]
    pub local: bool,
    /// Restart DP-ASVRG until this suboptimality.
    #[serde(default)]
    pub restart_eps: Option<f64>,
}

fn default_record_every() -> usize {
    1
}

impl SweepEntry {
    /// Solver configuration for a repetition with the given seed offset.
    pub fn solver_config(&self, seed_offset: u64) -> anyhow::Result<SolverConfig> {
        let missing = |field: &str| anyhow::anyhow!("sweep entry {:?}: missing field `{field}`", self.label);
        let mut c = match self.variant {
            VariantName::DpSgd => {
                SolverConfig::dp_sgd(self.total_iters.ok_or_else(|| missing("total_iters"))?, self.gap)
            }
            VariantName::DpSvrg => SolverConfig::dp_svrg(
                self.inner_m.ok_or_else(|| missing("inner_m"))?,
                self.gap,
                self.stages.ok_or_else(|| missing("stages"))?,
            ),
            VariantName::DpAsvrg => SolverConfig::dp_asvrg(
                self.inner_m.ok_or_else(|| missing("inner_m"))?,
                self.gap,
                self.stages.unwrap_or(1),
            ),
        };
        c = match self.batch {
            Some(b) => c.with_batch(b),
            None => c.with_full_batch(),
        };
        c = c.with_seed(self.seed.wrapping_add(seed_offset)).with_record_every(self.record_every);
        if let Some(eta) = self.eta {
            c = c.with_eta(eta);
        }
        if let Some(mu) = self.mu {
            c = c.with_mu(mu);
        }
        if let Some(theta) = self.theta {
            c = c.with_theta(theta);
        }
        if self.restart_eps.is_some() && self.variant != VariantName::DpAsvrg {
            bail!("sweep entry {:?}: restart_eps applies to dp_asvrg only", self.label);
        }
        if self.restart_eps.is_none() && self.variant == VariantName::DpAsvrg && self.stages.is_none() {
            return Err(missing("stages"));
        }
        c.validate().with_context(|| format!("sweep entry {:?}", self.label))?;
        Ok(c)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks everything that can be checked before any run starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {}, expected {SCHEMA_VERSION}", self.schema_version);
        }
        match (&self.problem, &self.snapshot) {
            (None, None) => bail!("need either a [problem] table or a `snapshot` path"),
            (Some(_), Some(_)) => bail!("`problem` and `snapshot` are mutually exclusive"),
            _ => {}
        }
        if !(self.reference_tol > 0.0) {
            bail!("reference_tol must be positive");
        }
        if !(self.eps > 0.0) {
            bail!("eps must be positive");
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        let mut labels = std::collections::HashSet::new();
        for entry in &self.sweep {
            if !labels.insert(entry.label.as_str()) {
                bail!("duplicate sweep label {:?}", entry.label);
            }
            entry.solver_config(0)?;
        }
        Ok(())
    }

    /// Output directory, resolved against the config file's directory.
    pub fn resolve_output(&self, config_path: &Path, out: Option<&Path>) -> PathBuf {
        match (out, &self.output_dir) {
            (Some(o), _) => o.to_path_buf(),
            (None, Some(d)) => relative_to(config_path, d),
            (None, None) => relative_to(config_path, Path::new("dproj-out")),
        }
    }
}

pub fn relative_to(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}
