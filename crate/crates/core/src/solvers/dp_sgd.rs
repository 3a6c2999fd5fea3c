use super::engine::{Engine, WeightedAverage};
use super::{RunOptions, SolverConfig, SolverOutput, Variant};
use crate::error::Result;
use crate::problems::LcpProblem;

/// Delayed-projection SGD with default options.
pub fn dp_sgd(problem: &LcpProblem, config: &SolverConfig) -> Result<SolverOutput> {
    dp_sgd_with(problem, config, RunOptions::default())
}

/// Runs `T = config.total_iters` SGD steps, projecting after step `t` when
/// `t` is in the schedule. Returns the projection of the `(1 − μη)`-weighted
/// average of `x_0..x_{T−1}`.
pub fn dp_sgd_with(problem: &LcpProblem, config: &SolverConfig, opts: RunOptions<'_>) -> Result<SolverOutput> {
    let config = SolverConfig { variant: Variant::DpSgd, ..config.clone() };
    config.validate()?;
    let eta = config.resolve_eta(problem, Variant::DpSgd)?;
    let mu = config.mu_for(problem);
    let schedule = config.schedule_for(config.total_iters)?;
    let (mut eng, mut z) = Engine::new(problem, &config, opts, Variant::DpSgd.name())?;
    let dim = z.len();
    let mut avg = WeightedAverage::new(1.0 - mu * eta, dim);
    let mut g = vec![0.0; dim];

    for t in 1..=config.total_iters {
        avg.fold(&z);
        eng.gradient(&z, &mut g);
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi -= eta * gi;
        }
        eng.counters.iterations += 1;
        eng.check_finite(&z)?;
        if schedule.contains(t) {
            eng.project(&mut z);
            eng.count_projection();
            eng.record_hit(&z)?;
        }
        eng.observe(0, &z, None);
    }

    let mut out = avg.value;
    eng.project(&mut out);
    eng.count_projection();
    eng.finish(&out, eta)
}
