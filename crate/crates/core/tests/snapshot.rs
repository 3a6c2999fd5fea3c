use dproj_core::problems::{
    lift_consensus, make_constrained_logreg, make_federated_logreg, make_federated_quadratics, make_lcqp,
    make_network_flow, Instance, LcpProblem,
};
use dproj_core::projection::build_subspace;
use dproj_core::snapshot::{load_instance, load_problem, save_problem};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

fn round_trip(name: &str, problem: &LcpProblem) {
    let meta = json!({ "name": name, "reference_value": -1.25 });
    let mut bytes = Vec::new();
    save_problem(problem, meta.clone(), &mut bytes).unwrap();
    let (back, meta_back) = load_problem(bytes.as_slice()).unwrap();
    assert_eq!(meta_back, meta);
    assert_eq!(back.dim(), problem.dim());
    assert_eq!(back.n_atoms(), problem.n_atoms());
    assert_eq!(back.smoothness().to_bits(), problem.smoothness().to_bits(), "{name}");
    assert_eq!(back.strong_convexity().to_bits(), problem.strong_convexity().to_bits(), "{name}");
    assert_eq!(back.objective().export(), problem.objective().export(), "{name}");
    assert_eq!(back.subspace().feasible_shift(), problem.subspace().feasible_shift(), "{name}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DVector::from_fn(problem.dim(), |_, _| StandardNormal.sample(&mut rng));
    assert_eq!(back.value(&x).to_bits(), problem.value(&x).to_bits(), "{name}");
    assert_eq!(back.gradient(&x), problem.gradient(&x), "{name}");
    assert_eq!(back.subspace().project_null(&x).unwrap(), problem.subspace().project_null(&x).unwrap(), "{name}");
    let mut again = Vec::new();
    save_problem(&back, meta, &mut again).unwrap();
    assert_eq!(bytes, again, "{name}");
}

#[test]
fn every_problem_kind_round_trips_bit_exactly() {
    let lcqp = make_lcqp(1, 10, 30, 3, 0.2, 1.0).unwrap();
    round_trip("lcqp", &lcqp);
    let a = lcqp.subspace().a_matrix().into_owned();
    let shifted = LcpProblem::new(
        lcqp.objective().clone(),
        build_subspace(&a, &DVector::from_vec(vec![1.0, -0.5, 0.25])).unwrap(),
    )
    .unwrap()
    .with_constants(3.5, 0.125);
    round_trip("shifted lcqp", &shifted);
    round_trip("binary logreg", &make_constrained_logreg(2, 40, 5, 2, 2, 1e-3).unwrap());
    round_trip("multiclass logreg", &make_constrained_logreg(2, 40, 5, 3, 2, 1e-3).unwrap());
    let flow = make_network_flow(
        &[(0, 1), (1, 2), (0, 2), (2, 3), (1, 3)],
        &DVector::from_vec(vec![1.0, 0.5, 0.0, -1.5]),
        &[1.0, 2.0, 0.5, 1.0, 3.0],
    )
    .unwrap();
    round_trip("network flow", &flow);
    round_trip(
        "lifted quadratics",
        &lift_consensus(&make_federated_quadratics(3, 3, 4, 6, 0.5, 1.0, 0.3).unwrap()).unwrap(),
    );
}

#[test]
fn lifted_snapshots_reload_as_federated_instances() {
    let fed = make_federated_logreg(4, 3, 7, 3, 1e-2, 0.5).unwrap();
    let mut bytes = Vec::new();
    save_problem(&lift_consensus(&fed).unwrap(), json!({}), &mut bytes).unwrap();
    let (instance, _) = load_instance(bytes.as_slice()).unwrap();
    let Instance::Federated(back) = instance else { panic!("expected a federated instance") };
    assert_eq!(back.n_workers(), 3);
    assert_eq!(back.keys(), fed.keys());
    for (a, b) in back.locals().iter().zip(fed.locals()) {
        assert_eq!(a.export(), b.export());
    }

    let mut single = Vec::new();
    save_problem(&make_lcqp(1, 6, 10, 2, 0.5, 1.0).unwrap(), json!({}), &mut single).unwrap();
    assert!(matches!(load_instance(single.as_slice()).unwrap().0, Instance::Single(_)));
}

#[test]
fn truncated_snapshots_are_rejected() {
    let mut bytes = Vec::new();
    save_problem(&make_lcqp(1, 6, 10, 2, 0.5, 1.0).unwrap(), json!({}), &mut bytes).unwrap();
    for cut in [4, 20, bytes.len() - 8] {
        assert!(load_problem(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}
