use super::engine::{fold_mean, Engine, WeightedAverage};
use super::{RunOptions, SolverConfig, SolverOutput, Variant};
use crate::error::Result;
use crate::problems::LcpProblem;

/// Delayed-projection SVRG with default options.
pub fn dp_svrg(problem: &LcpProblem, config: &SolverConfig) -> Result<SolverOutput> {
    dp_svrg_with(problem, config, RunOptions::default())
}

/// Runs `S` stages of `m` control-variate steps. Each stage anchors at the
/// projected full gradient of the snapshot; the next snapshot is the
/// projected `(1 − μη)`-weighted average of `x_0..x_{m−1}`. Returns the
/// last snapshot when `μ > 0` and the mean of all snapshots otherwise.
pub fn dp_svrg_with(problem: &LcpProblem, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolverOutput> {
    let config = SolverConfig { variant: Variant::DpSvrg, ..config.clone() };
    config.validate()?;
    let eta = config.resolve_eta(problem, Variant::DpSvrg)?;
    let mu = config.mu_for(problem);
    let schedule = config.schedule_for(config.inner_m)?;
    let (mut eng, mut z) = Engine::new(problem, &config, opts, Variant::DpSvrg.name())?;
    let dim = z.len();
    eng.project(&mut z);
    let mut snapshot = z.clone();
    let mut snapshot_mean = vec![0.0; dim];
    let mut avg = WeightedAverage::new(1.0 - mu * eta, dim);
    let (mut h, mut g) = (vec![0.0; dim], vec![0.0; dim]);

    for s in 0..config.stages {
        eng.full_gradient(&snapshot, &mut h);
        eng.project(&mut h);
        eng.count_projection();
        avg.reset();
        for t in 0..config.inner_m {
            avg.fold(&z);
            eng.control_variate(&z, &snapshot, &h, &mut g);
            for (zi, gi) in z.iter_mut().zip(&g) {
                *zi -= eta * gi;
            }
            eng.counters.iterations += 1;
            eng.check_finite(&z)?;
            if schedule.contains(t + 1) {
                eng.project(&mut z);
                eng.count_projection();
                eng.record_hit(&z)?;
            }
            eng.observe(s as u64, &z, None);
        }
        eng.project(&mut z);
        snapshot.copy_from_slice(&avg.value);
        eng.project(&mut snapshot);
        eng.counters.stages += 1;
        eng.record_stage(&snapshot)?;
        fold_mean(&mut snapshot_mean, &snapshot, s + 1);
    }

    let out = if mu > 0.0 { snapshot } else { snapshot_mean };
    eng.finish(&out, eta)
}
