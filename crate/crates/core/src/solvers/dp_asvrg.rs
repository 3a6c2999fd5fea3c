use super::engine::{fold_mean, Engine};
use super::theta::{delta_for, initial_theta, ThetaState};
use super::{RunOptions, SolverConfig, SolverOutput, ThetaRule, Variant};
use crate::error::Result;
use crate::problems::LcpProblem;

/// Delayed-projection accelerated SVRG with default options.
pub fn dp_asvrg(problem: &LcpProblem, config: &SolverConfig) -> Result<SolverOutput> {
    dp_asvrg_with(problem, config, RunOptions::default())
}

/// Momentum schedule for the configured step size.
pub(crate) fn theta_state(config: &SolverConfig, eta: f64, smoothness: f64, mu: f64) -> Result<ThetaState> {
    let delta = delta_for(eta, smoothness, config.gap);
    match config.theta {
        ThetaRule::Fixed(theta) => ThetaState::fixed(delta, theta),
        ThetaRule::Auto if mu > 0.0 => ThetaState::constant(delta, eta, mu, config.inner_m),
        ThetaRule::Auto => ThetaState::recursive(delta, initial_theta(eta * smoothness)),
    }
}

/// Runs `S` stages of the two-sequence accelerated update
/// `u ← u − (η/θ)g`, `x ← x̃ + θ(u − x̃)`, projecting both at schedule hits.
/// The next snapshot is the projected mean of `x_1..x_m`. Returns the mean of
/// all snapshots when `μ > 0` and the last snapshot otherwise.
pub fn dp_asvrg_with(problem: &LcpProblem, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolverOutput> {
    let config = SolverConfig { variant: Variant::DpAsvrg, ..config.clone() };
    config.validate()?;
    let eta = config.resolve_eta(problem, Variant::DpAsvrg)?;
    let mu = config.mu_for(problem);
    let mut theta = theta_state(&config, eta, problem.smoothness(), mu)?;
    let schedule = config.schedule_for(config.inner_m)?;
    let (mut eng, mut z) = Engine::new(problem, &config, opts, Variant::DpAsvrg.name())?;
    let dim = z.len();
    eng.project(&mut z);
    let mut snapshot = z.clone();
    let mut u = z.clone();
    let mut snapshot_mean = vec![0.0; dim];
    let mut inner_mean = vec![0.0; dim];
    let (mut h, mut g) = (vec![0.0; dim], vec![0.0; dim]);

    for s in 0..config.stages {
        let th = theta.current();
        eng.full_gradient(&snapshot, &mut h);
        eng.project(&mut h);
        eng.count_projection();
        z.copy_from_slice(&snapshot);
        inner_mean.fill(0.0);
        for t in 0..config.inner_m {
            eng.control_variate(&z, &snapshot, &h, &mut g);
            let step = eta / th;
            for ((ui, zi), (gi, si)) in u.iter_mut().zip(z.iter_mut()).zip(g.iter().zip(&snapshot)) {
                *ui -= step * gi;
                *zi = si + th * (*ui - si);
            }
            eng.counters.iterations += 1;
            eng.check_finite(&z)?;
            if schedule.contains(t + 1) {
                eng.project(&mut z);
                eng.project(&mut u);
                eng.count_projection();
                eng.record_hit(&z)?;
            }
            fold_mean(&mut inner_mean, &z, t + 1);
            eng.observe(s as u64, &z, Some(&u));
        }
        eng.project(&mut u);
        snapshot.copy_from_slice(&inner_mean);
        eng.project(&mut snapshot);
        eng.counters.stages += 1;
        eng.record_stage(&snapshot)?;
        fold_mean(&mut snapshot_mean, &snapshot, s + 1);
        theta.advance()?;
    }

    let out = if mu > 0.0 { snapshot_mean } else { snapshot };
    eng.finish(&out, eta)
}
