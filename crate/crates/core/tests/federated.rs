use dproj_core::federated::{
    equivalence_harness, equivalence_harness_with, local_asvrg_with, local_sgd, local_sgd_with, local_svrg_with,
    LocalOptions,
};
use dproj_core::problems::{make_federated_logreg, make_federated_quadratics, FederatedInstance, LcpProblem};
use dproj_core::projection::ConstraintSubspace;
use dproj_core::solvers::{run, IterateEvent, RunOptions, SolverConfig, Variant};

fn quad(seed: u64, n: usize) -> FederatedInstance {
    make_federated_quadratics(seed, n, 3, 12, 0.5, 1.0, 0.3).unwrap()
}

fn configs() -> Vec<(Variant, SolverConfig)> {
    vec![
        (Variant::DpSgd, SolverConfig::dp_sgd(200, 4).with_batch(2).with_seed(7)),
        (Variant::DpSvrg, SolverConfig::dp_svrg(40, 4, 5).with_batch(2).with_seed(7)),
        (Variant::DpAsvrg, SolverConfig::dp_asvrg(40, 4, 5).with_batch(2).with_seed(7)),
    ]
}

#[test]
fn coupled_local_runs_match_lifted_runs() {
    let fed = quad(1, 4);
    for (variant, config) in configs() {
        let report = equivalence_harness(&fed, variant, &config).unwrap();
        assert_eq!(report.iterations, 200);
        assert!(report.counts_match, "{variant:?}");
        assert!(report.pass, "{variant:?}: gap {}", report.max_iterate_gap);
        assert_eq!(report.max_iterate_gap, 0.0, "{variant:?}");
    }
}

#[test]
fn coupled_logistic_workers_match_lifted_runs() {
    let fed = make_federated_logreg(3, 3, 20, 4, 1e-2, 0.5).unwrap();
    for (variant, config) in configs() {
        let report = equivalence_harness(&fed, variant, &config).unwrap();
        assert!(report.pass, "{variant:?}: gap {}", report.max_iterate_gap);
    }
}

#[test]
fn decoupled_seeds_break_equivalence() {
    let fed = quad(2, 4);
    for (variant, config) in configs() {
        let report = equivalence_harness_with(&fed, variant, &config, true).unwrap();
        assert!(!report.pass, "{variant:?}");
    }
}

#[test]
fn single_worker_matches_single_machine_solver() {
    let fed = quad(5, 1);
    let problem = LcpProblem::new(fed.locals()[0].clone(), ConstraintSubspace::unconstrained(3)).unwrap();
    for (variant, config) in configs() {
        let mut single = Vec::new();
        let mut on_single = |e: &IterateEvent<'_>| single.push(e.x.to_vec());
        let out = run(&problem, &config, RunOptions { observer: Some(&mut on_single), ..Default::default() }).unwrap();
        let mut local = Vec::new();
        let mut on_local = |e: &IterateEvent<'_>| local.push(e.x.to_vec());
        let opts = LocalOptions { observer: Some(&mut on_local), ..Default::default() };
        let x_hat = match variant {
            Variant::DpSgd => local_sgd_with(&fed, &config, opts),
            Variant::DpSvrg => local_svrg_with(&fed, &config, opts),
            Variant::DpAsvrg => local_asvrg_with(&fed, &config, opts),
        }
        .unwrap()
        .x_hat;
        assert_eq!(single.len(), 200);
        assert_eq!(local.len(), 200);
        for (a, b) in single.iter().zip(&local) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10), "{variant:?}");
        }
        assert!((x_hat - &out.y_hat).amax() <= 1e-10, "{variant:?}");
    }
}

#[test]
fn comm_log_counts_rounds() {
    let fed = quad(4, 3);
    let config = SolverConfig::dp_sgd(20, 5).with_batch(1);
    let out = local_sgd(&fed, &config).unwrap();
    // Four synchronizations plus the final averaging.
    assert_eq!(out.comm.rounds, 5);
    assert_eq!(out.counters.comm_rounds, 5);
    assert_eq!(out.comm.vectors_transferred, 30);
    assert_eq!(out.comm.bytes_equivalent, 30 * 3 * 8);
    assert_eq!(out.counters.gradients, 60);
}
