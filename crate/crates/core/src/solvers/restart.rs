use nalgebra::DVector;

use super::dp_asvrg::{dp_asvrg_with, theta_state};
use super::{RunOptions, SolverConfig, Variant};
use crate::error::{Error, Result};
use crate::metrics::{ComplexityCounters, RunTrace};
use crate::problems::LcpProblem;

/// Stages per restart that halve the expected suboptimality:
/// `⌈2[(1−δ)/(θ−2δ) + θ²/((θ−2δ)ημm) − 1]⌉`.
pub fn restart_stages(eta: f64, mu: f64, inner_m: usize, delta: f64, theta: f64) -> usize {
    let margin = theta - 2.0 * delta;
    let s = 2.0 * ((1.0 - delta) / margin + theta * theta / (margin * eta * mu * inner_m as f64) - 1.0);
    s.ceil().max(1.0) as usize
}

#[derive(Clone, Debug)]
pub struct RestartOutput {
    pub y_hat: DVector<f64>,
    pub trace: RunTrace,
    pub counters: ComplexityCounters,
    pub restarts: usize,
    pub stages_per_restart: usize,
    /// Suboptimality estimate before the first restart and after each one.
    pub suboptimality: Vec<f64>,
    /// The restart budget ran out before reaching the target.
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RestartOptions {
    /// `F(x̃*)`. Without it progress is estimated by `‖P_{A⊥}∇F‖²/(2μ)`.
    pub reference_value: Option<f64>,
    /// Stages per restart; defaults to [`restart_stages`].
    pub stages: Option<usize>,
    pub x0: Option<DVector<f64>>,
    pub run_id: Option<String>,
}

pub fn restart_asvrg(problem: &LcpProblem, config: &SolverConfig, eps_target: f64) -> Result<RestartOutput> {
    restart_asvrg_with(problem, config, eps_target, RestartOptions::default())
}

/// Restarted DP-ASVRG for strongly convex problems. Each restart runs the
/// accelerated solver from the previous output until the suboptimality
/// estimate reaches `eps_target` or `⌈log₂(F₀/ε)⌉ + 5` restarts are spent.
pub fn restart_asvrg_with(
    problem: &LcpProblem,
    config: &SolverConfig,
    eps_target: f64,
    opts: RestartOptions,
) -> Result<RestartOutput> {
    let config = SolverConfig { variant: Variant::DpAsvrg, ..config.clone() };
    config.validate()?;
    if !(eps_target > 0.0) {
        return Err(Error::InvalidArgument(format!("eps_target must be positive, got {eps_target}")));
    }
    let mu = config.mu_for(problem);
    if mu <= 0.0 {
        return Err(Error::DomainError("restarting requires mu > 0".into()));
    }
    let eta = config.resolve_eta(problem, Variant::DpAsvrg)?;
    let theta = theta_state(&config, eta, problem.smoothness(), mu)?;
    let stages = opts.stages.unwrap_or_else(|| restart_stages(eta, mu, config.inner_m, theta.delta, theta.theta));
    let run_config = SolverConfig { stages, ..config.clone() };

    let estimate = |x: &DVector<f64>| match opts.reference_value {
        Some(f_star) => problem.value(x) - f_star,
        None => problem.stationarity(x).powi(2) / (2.0 * mu),
    };
    let mut y = match &opts.x0 {
        Some(x0) => x0.clone(),
        None => problem.subspace().feasible_shift().clone(),
    };
    let initial = estimate(&y);
    let mut trace = RunTrace::new(opts.run_id.clone().unwrap_or_else(|| "restart_asvrg".into()), "restart_asvrg");
    let mut counters = ComplexityCounters::default();
    let mut history = vec![initial];
    let budget = if initial > eps_target { (initial / eps_target).log2().ceil() as usize + 5 } else { 0 };
    let (mut best, mut best_value) = (y.clone(), initial);

    for r in 0..budget {
        let out = dp_asvrg_with(
            problem,
            &SolverConfig { seed: config.seed.wrapping_add(r as u64), ..run_config.clone() },
            RunOptions {
                reference_value: opts.reference_value,
                x0: Some(y),
                run_id: Some(trace.run_id.clone()),
                observer: None,
                start: counters,
            },
        )?;
        trace.extend_restart(out.trace, r as u32)?;
        counters = out.counters;
        y = out.y_hat;
        let value = estimate(&y);
        history.push(value);
        if value < best_value {
            best = y.clone();
            best_value = value;
        }
        if value <= eps_target {
            return Ok(RestartOutput {
                y_hat: y,
                trace,
                counters,
                restarts: r + 1,
                stages_per_restart: stages,
                suboptimality: history,
                budget_exhausted: false,
            });
        }
    }
    Ok(RestartOutput {
        budget_exhausted: budget > 0,
        y_hat: best,
        trace,
        counters,
        restarts: budget,
        stages_per_restart: stages,
        suboptimality: history,
    })
}
