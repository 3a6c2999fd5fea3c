//! Delayed-projection solvers: DP-SGD, DP-SVRG, DP-ASVRG and restarted
//! DP-ASVRG.

mod dp_asvrg;
mod dp_sgd;
mod dp_svrg;
pub(crate) mod engine;
mod restart;
mod schedule;
mod step;
mod theta;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metrics::{ComplexityCounters, RunTrace};
use crate::problems::LcpProblem;

pub use dp_asvrg::{dp_asvrg, dp_asvrg_with};
pub use dp_sgd::{dp_sgd, dp_sgd_with};
pub use dp_svrg::{dp_svrg, dp_svrg_with};
pub use restart::{restart_asvrg, restart_asvrg_with, restart_stages, RestartOptions, RestartOutput};
pub use schedule::{make_schedule, ProjectionSchedule};
pub use step::default_step_size;
pub use theta::{delta_for, initial_theta, theta_next, ThetaMode, ThetaState};

/// Strong convexity below this is treated as zero.
pub const MU_ZERO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    DpSgd,
    DpSvrg,
    DpAsvrg,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::DpSgd => "dp_sgd",
            Variant::DpSvrg => "dp_svrg",
            Variant::DpAsvrg => "dp_asvrg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Exact gradients; one full gradient per step.
    Full,
    /// Mean of this many independently drawn atoms.
    Batch(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaRule {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub eta: StepSize,
    pub gap: usize,
    /// Inner iterations per stage (variance-reduced solvers).
    pub inner_m: usize,
    pub stages: usize,
    /// Total iterations (DP-SGD).
    pub total_iters: usize,
    /// Strong convexity used for weights and θ; defaults to the problem's.
    pub mu: Option<f64>,
    pub sampling: Sampling,
    pub seed: u64,
    /// Record one trace row per this many projection events.
    pub record_every: usize,
    pub theta: ThetaRule,
    /// Custom projection indices within one stage (or the whole DP-SGD run).
    pub schedule: Option<Vec<usize>>,
}

impl SolverConfig {
    fn base(variant: Variant, gap: usize) -> Self {
        Self {
            variant,
            eta: StepSize::Auto,
            gap,
            inner_m: gap,
            stages: 1,
            total_iters: gap,
            mu: None,
            sampling: Sampling::Batch(1),
            seed: 0,
            record_every: 1,
            theta: ThetaRule::Auto,
            schedule: None,
        }
    }

    pub fn dp_sgd(total_iters: usize, gap: usize) -> Self {
        Self { total_iters, ..Self::base(Variant::DpSgd, gap) }
    }

    pub fn dp_svrg(inner_m: usize, gap: usize, stages: usize) -> Self {
        Self { inner_m, stages, ..Self::base(Variant::DpSvrg, gap) }
    }

    pub fn dp_asvrg(inner_m: usize, gap: usize, stages: usize) -> Self {
        Self { inner_m, stages, ..Self::base(Variant::DpAsvrg, gap) }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = StepSize::Fixed(eta);
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.sampling = Sampling::Batch(batch);
        self
    }

    pub fn with_full_batch(mut self) -> Self {
        self.sampling = Sampling::Full;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = ThetaRule::Fixed(theta);
        self
    }

    pub fn with_schedule(mut self, indices: Vec<usize>) -> Self {
        self.schedule = Some(indices);
        self
    }

    /// Checks the structural rules without a problem at hand.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.gap == 0 {
            return bad("gap must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if let Sampling::Batch(0) = self.sampling {
            return bad("batch must be at least 1".into());
        }
        if let StepSize::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("step size must be positive, got {eta}"));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0 && mu.is_finite()) {
                return bad(format!("mu must be non-negative, got {mu}"));
            }
        }
        if let ThetaRule::Fixed(t) = self.theta {
            if !(t > 0.0) {
                return bad(format!("theta must be positive, got {t}"));
            }
        }
        match self.variant {
            Variant::DpSgd if self.total_iters < self.gap => {
                bad(format!("total_iters {} must be at least gap {}", self.total_iters, self.gap))
            }
            Variant::DpSvrg | Variant::DpAsvrg if self.inner_m < self.gap => {
                bad(format!("inner_m {} must be at least gap {}", self.inner_m, self.gap))
            }
            Variant::DpSvrg | Variant::DpAsvrg if self.stages == 0 => bad("stages must be at least 1".into()),
            _ => self.schedule_for(self.inner_total()).map(|_| ()),
        }
    }

    fn inner_total(&self) -> usize {
        match self.variant {
            Variant::DpSgd => self.total_iters,
            _ => self.inner_m,
        }
    }

    pub(crate) fn schedule_for(&self, total: usize) -> Result<ProjectionSchedule> {
        match &self.schedule {
            Some(idx) => ProjectionSchedule::custom(total, self.gap, idx.clone()),
            None => ProjectionSchedule::new(total, self.gap),
        }
    }

    pub(crate) fn mu_for(&self, problem: &LcpProblem) -> f64 {
        let mu = self.mu.unwrap_or(problem.strong_convexity());
        if mu < MU_ZERO {
            0.0
        } else {
            mu
        }
    }

    /// Step size for `variant` on `problem`, refusing `ηL > 1/2`.
    pub fn resolve_eta(&self, problem: &LcpProblem, variant: Variant) -> Result<f64> {
        let l = problem.smoothness();
        let eta = match self.eta {
            StepSize::Fixed(eta) => eta,
            StepSize::Auto => default_step_size(variant, l, self.mu_for(problem), self.gap, self.inner_m, self.stages),
        };
        if eta * l > 0.5 * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { eta_l: eta * l });
        }
        Ok(eta)
    }
}

/// Per-iterate callback payload, in original coordinates.
pub struct IterateEvent<'a> {
    /// Zero-based stage (always 0 for DP-SGD).
    pub stage: u64,
    /// Iterations completed so far.
    pub iter: u64,
    pub x: &'a [f64],
    /// Auxiliary sequence of the accelerated solver.
    pub u: Option<&'a [f64]>,
}

pub type Observer<'a> = &'a mut dyn FnMut(&IterateEvent<'_>);

#[derive(Default)]
pub struct RunOptions<'a> {
    /// `F(x̃*)`; enables the suboptimality column.
    pub reference_value: Option<f64>,
    /// Starting point; defaults to the least-norm feasible point.
    pub x0: Option<DVector<f64>>,
    pub run_id: Option<String>,
    pub observer: Option<Observer<'a>>,
    /// Counter values to continue from, for concatenated runs.
    pub start: ComplexityCounters,
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub y_hat: DVector<f64>,
    pub trace: RunTrace,
    pub counters: ComplexityCounters,
    pub eta: f64,
    /// `F(ŷ) − F*`, NaN without a reference value.
    pub suboptimality: f64,
    /// Snapshot suboptimality after each stage.
    pub stage_suboptimality: Vec<f64>,
}

/// Runs the solver named by `config.variant`.
pub fn run(problem: &LcpProblem, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolverOutput> {
    match config.variant {
        Variant::DpSgd => dp_sgd_with(problem, config, opts),
        Variant::DpSvrg => dp_svrg_with(problem, config, opts),
        Variant::DpAsvrg => dp_asvrg_with(problem, config, opts),
    }
}

pub(crate) use dp_asvrg::theta_state as engine_theta;
