use super::{local_asvrg_with, local_sgd_with, local_svrg_with, LocalOptions};
use crate::error::Result;
use crate::problems::{lift_consensus, FederatedInstance};
use crate::solvers::{run, IterateEvent, RunOptions, SolverConfig, Variant};

/// Iterate-by-iterate comparison of a local method with its lifted
/// counterpart.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// Largest `‖x_local − x_lifted‖∞` over all iterations.
    pub max_iterate_gap: f64,
    /// Largest `‖x_lifted‖∞` over all iterations.
    pub max_norm: f64,
    pub iterations: usize,
    /// Whether the communication rounds equal the lifted projection count.
    pub counts_match: bool,
    pub pass: bool,
}

/// Tolerance on the relative iterate gap.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

pub fn equivalence_harness(
    fed: &FederatedInstance,
    variant: Variant,
    config: &SolverConfig,
) -> Result<EquivalenceReport> {
    equivalence_harness_with(fed, variant, config, false)
}

/// Runs the local method and the delayed-projection method on the lifted
/// problem with the same configuration. With `decouple` the local run uses
/// the next seed, which breaks the shared random streams and serves as a
/// negative control.
pub fn equivalence_harness_with(
    fed: &FederatedInstance,
    variant: Variant,
    config: &SolverConfig,
    decouple: bool,
) -> Result<EquivalenceReport> {
    let config = SolverConfig { variant, ..config.clone() };
    let lifted = lift_consensus(fed)?;

    let mut lifted_states: Vec<Vec<f64>> = Vec::new();
    let mut on_lifted = |e: &IterateEvent<'_>| lifted_states.push(e.x.to_vec());
    let lifted_out = run(&lifted, &config, RunOptions { observer: Some(&mut on_lifted), ..Default::default() })?;

    let local_config = if decouple { config.clone().with_seed(config.seed.wrapping_add(1)) } else { config.clone() };
    let mut local_states: Vec<Vec<f64>> = Vec::new();
    let mut on_local = |e: &IterateEvent<'_>| local_states.push(e.x.to_vec());
    let opts = LocalOptions { observer: Some(&mut on_local), ..Default::default() };
    let local_out = match variant {
        Variant::DpSgd => local_sgd_with(fed, &local_config, opts)?,
        Variant::DpSvrg => local_svrg_with(fed, &local_config, opts)?,
        Variant::DpAsvrg => local_asvrg_with(fed, &local_config, opts)?,
    };

    let mut max_gap: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for (a, b) in local_states.iter().zip(&lifted_states) {
        for (x, y) in a.iter().zip(b) {
            max_gap = max_gap.max((x - y).abs());
            max_norm = max_norm.max(y.abs());
        }
    }
    let same_len = local_states.len() == lifted_states.len();
    let counts_match = local_out.counters.comm_rounds == lifted_out.counters.projections
        && local_out.counters.gradients == lifted_out.counters.gradients;
    Ok(EquivalenceReport {
        max_iterate_gap: max_gap,
        max_norm,
        iterations: lifted_states.len(),
        counts_match,
        pass: same_len && counts_match && max_gap <= EQUIVALENCE_TOL * (1.0 + max_norm),
    })
}
