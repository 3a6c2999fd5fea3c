use dproj_core::federated::{
    equivalence_harness, local_asvrg_with, local_sgd_with, local_svrg_with, LocalOptions, LocalOutput,
};
use dproj_core::problems::{lift_consensus, make_federated_quadratics, solve_reference, FederatedInstance};
use dproj_core::rng::AtomSampler;
use dproj_core::solvers::{IterateEvent, SolverConfig, Variant};
use nalgebra::DVector;

fn run_local(fed: &FederatedInstance, variant: Variant, config: &SolverConfig, opts: LocalOptions<'_>) -> LocalOutput {
    match variant {
        Variant::DpSgd => local_sgd_with(fed, config, opts),
        Variant::DpSvrg => local_svrg_with(fed, config, opts),
        Variant::DpAsvrg => local_asvrg_with(fed, config, opts),
    }
    .unwrap()
}

fn observed(fed: &FederatedInstance, variant: Variant, config: &SolverConfig) -> (Vec<Vec<f64>>, LocalOutput) {
    let mut seen = Vec::new();
    let mut observer = |e: &IterateEvent<'_>| seen.push(e.x.to_vec());
    let out = run_local(fed, variant, config, LocalOptions { observer: Some(&mut observer), ..Default::default() });
    (seen, out)
}

/// Reference value of the worker average `(1/n)Σ f_k`.
fn average_reference(fed: &FederatedInstance) -> f64 {
    let lifted = lift_consensus(fed).unwrap();
    lifted.value(&solve_reference(&lifted, 1e-13).unwrap()) / fed.n_workers() as f64
}

fn mean_grad(fed: &FederatedInstance, k: usize, x: &[f64], atoms: &[usize]) -> DVector<f64> {
    let mut g = vec![0.0; x.len()];
    for &i in atoms {
        fed.locals()[k].add_atom_gradient(x, &[i], &mut g);
    }
    DVector::from_vec(g) / atoms.len() as f64
}

fn full_grad(fed: &FederatedInstance, k: usize, x: &[f64]) -> DVector<f64> {
    let mut g = vec![0.0; x.len()];
    fed.locals()[k].gradient(x, &mut g);
    DVector::from_vec(g)
}

#[test]
fn workers_agree_after_every_synchronization() {
    let fed = make_federated_quadratics(3, 8, 4, 10, 0.5, 1.0, 0.3).unwrap();
    let (n, d, gap) = (8, 4, 3);
    for (variant, config) in [
        (Variant::DpSgd, SolverConfig::dp_sgd(60, gap).with_batch(1)),
        (Variant::DpSvrg, SolverConfig::dp_svrg(12, gap, 3).with_batch(1)),
        (Variant::DpAsvrg, SolverConfig::dp_asvrg(12, gap, 3).with_batch(1)),
    ] {
        let (seen, _) = observed(&fed, variant, &config);
        let m = if variant == Variant::DpSgd { 60 } else { 12 };
        for (i, x) in seen.iter().enumerate() {
            if (i % m + 1) % gap != 0 && i % m + 1 != m {
                continue;
            }
            let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|k| x[k * d + j]).sum::<f64>() / n as f64).collect();
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            for k in 0..n {
                let dev = (0..d).map(|j| (x[k * d + j] - mean[j]).powi(2)).sum::<f64>().sqrt();
                assert!(dev <= 1e-12 * (1.0 + norm), "{variant:?} iterate {i}: worker {k} off by {dev}");
            }
        }
    }
}

#[test]
fn worker_order_does_not_change_the_average() {
    let fed = make_federated_quadratics(5, 5, 3, 9, 0.5, 1.0, 0.3).unwrap();
    let perm = [3, 0, 4, 2, 1];
    let shuffled = fed.permuted(&perm);
    for (variant, config) in [
        (Variant::DpSgd, SolverConfig::dp_sgd(100, 4).with_batch(2).with_seed(3)),
        (Variant::DpSvrg, SolverConfig::dp_svrg(20, 4, 4).with_batch(2).with_seed(3)),
        (Variant::DpAsvrg, SolverConfig::dp_asvrg(20, 4, 4).with_batch(2).with_seed(3)),
    ] {
        let a = run_local(&fed, variant, &config, LocalOptions::default());
        let b = run_local(&shuffled, variant, &config, LocalOptions::default());
        let scale = 1.0 + a.last_sync.amax();
        assert!((&a.last_sync - &b.last_sync).amax() <= 1e-12 * scale, "{variant:?}");
        assert!((&a.x_hat - &b.x_hat).amax() <= 1e-12 * scale, "{variant:?}");
        assert_eq!(a.counters, b.counters);
    }
}

#[test]
fn unit_gap_local_sgd_is_minibatch_parallel_sgd() {
    let fed = make_federated_quadratics(6, 3, 4, 15, 0.5, 1.0, 0.4).unwrap();
    let (seed, batch, steps) = (11, 3, 150);
    let config = SolverConfig::dp_sgd(steps, 1).with_batch(batch).with_seed(seed);
    let (seen, out) = observed(&fed, Variant::DpSgd, &config);
    let mut samplers: Vec<AtomSampler> = (0..3).map(|k| AtomSampler::new(seed, &[fed.keys()[k]], &[15])).collect();
    let mut x = DVector::zeros(4);
    let mut atoms = Vec::new();
    for (t, stacked) in seen.iter().enumerate() {
        let mut g = DVector::zeros(4);
        for (k, sampler) in samplers.iter_mut().enumerate() {
            sampler.draw(batch, &mut atoms);
            g += mean_grad(&fed, k, x.as_slice(), &atoms);
        }
        x -= g * (out.eta / 3.0);
        for k in 0..3 {
            let gap = (DVector::from_column_slice(&stacked[k * 4..(k + 1) * 4]) - &x).amax();
            assert!(gap <= 1e-9 * (1.0 + x.amax()), "step {t}, worker {k}: {gap}");
        }
    }
}

#[test]
fn single_worker_local_svrg_is_textbook_svrg() {
    let fed = make_federated_quadratics(7, 1, 5, 20, 0.5, 1.0, 0.3).unwrap();
    let (m, stages, batch, seed) = (10, 6, 2, 4);
    let config = SolverConfig::dp_svrg(m, m, stages).with_batch(batch).with_seed(seed);
    let (seen, out) = observed(&fed, Variant::DpSvrg, &config);
    let (eta, q) = (out.eta, 1.0 - fed.strong_convexity() * out.eta);
    let mut sampler = AtomSampler::new(seed, &[fed.keys()[0]], &[20]);
    let mut atoms = Vec::new();
    let mut x = DVector::<f64>::zeros(5);
    let mut snapshot = x.clone();
    let mut expected = Vec::new();
    for _ in 0..stages {
        let anchor = full_grad(&fed, 0, snapshot.as_slice());
        let (mut num, mut den) = (DVector::zeros(5), 0.0);
        for j in 0..m {
            let w = q.powi((m - 1 - j) as i32);
            num += &x * w;
            den += w;
            sampler.draw(batch, &mut atoms);
            let g =
                mean_grad(&fed, 0, x.as_slice(), &atoms) - mean_grad(&fed, 0, snapshot.as_slice(), &atoms) + &anchor;
            x -= g * eta;
            expected.push(x.clone());
        }
        snapshot = num / den;
    }
    assert_eq!(seen.len(), expected.len());
    for (t, (a, b)) in seen.iter().zip(&expected).enumerate() {
        let gap = (DVector::from_column_slice(a) - b).amax();
        assert!(gap <= 1e-12 * (1.0 + b.amax()), "iterate {t}: {gap}");
    }
    assert!((&out.x_hat - &snapshot).amax() <= 1e-12 * (1.0 + snapshot.amax()));
}

#[test]
fn single_worker_local_asvrg_is_accelerated_gradient() {
    let fed = make_federated_quadratics(8, 1, 5, 20, 0.5, 1.0, 0.3).unwrap();
    let stages = 80;
    let config = SolverConfig::dp_asvrg(1, 1, stages).with_full_batch();
    let (seen, out) = observed(&fed, Variant::DpAsvrg, &config);
    let eta = out.eta;
    let theta = (eta * fed.strong_convexity()).sqrt();
    let (mut x, mut u) = (DVector::<f64>::zeros(5), DVector::<f64>::zeros(5));
    for (s, got) in seen.iter().enumerate() {
        u -= full_grad(&fed, 0, x.as_slice()) * (eta / theta);
        x = &x + (&u - &x) * theta;
        let gap = (DVector::from_column_slice(got) - &x).amax();
        assert!(gap <= 1e-10 * (1.0 + x.amax()), "stage {s}: {gap}");
    }
}

#[test]
fn full_batch_equivalence_is_exact() {
    let fed = make_federated_quadratics(9, 4, 3, 10, 0.5, 1.0, 0.3).unwrap();
    for (variant, config) in [
        (Variant::DpSgd, SolverConfig::dp_sgd(60, 3).with_full_batch()),
        (Variant::DpSvrg, SolverConfig::dp_svrg(12, 3, 4).with_full_batch()),
        (Variant::DpAsvrg, SolverConfig::dp_asvrg(12, 3, 4).with_full_batch()),
    ] {
        let report = equivalence_harness(&fed, variant, &config).unwrap();
        assert!(report.pass && report.counts_match, "{variant:?}");
        assert!(report.max_iterate_gap <= 1e-12, "{variant:?}: {}", report.max_iterate_gap);
    }
}

#[test]
fn local_svrg_has_no_noise_floor() {
    let fed = make_federated_quadratics(0, 4, 5, 50, 0.5, 1.0, 0.5).unwrap();
    let (_, zeta) = fed.heterogeneity().unwrap();
    assert!(zeta > 0.1);
    let f_star = average_reference(&fed);
    let opts = || LocalOptions { reference_value: Some(f_star), ..Default::default() };
    let svrg = local_svrg_with(&fed, &SolverConfig::dp_svrg(200, 5, 100).with_batch(1).with_seed(1), opts()).unwrap();
    let sgd_config = SolverConfig::dp_sgd(50_000, 5).with_batch(1).with_seed(1).with_record_every(10);
    let sgd = local_sgd_with(&fed, &sgd_config, opts()).unwrap();
    let rows = sgd.trace.rows();
    let tail = &rows[rows.len() / 2..rows.len() - 1];
    let plateau = tail.iter().map(|r| r.suboptimality).sum::<f64>() / tail.len() as f64;
    assert!(svrg.suboptimality <= 1e-10, "local SVRG ended at {}", svrg.suboptimality);
    assert!(plateau >= 1e-7, "local SGD plateau {plateau}");
    assert!(sgd.suboptimality >= 1e3 * svrg.suboptimality.max(1e-16));
}

#[test]
fn local_asvrg_needs_fewer_stages_when_ill_conditioned() {
    let (m, gap, budget, eps) = (100, 2, 15_000, 1e-6);
    let results = dproj_core::par::map(3, |seed| {
        let fed = make_federated_quadratics(seed as u64, 4, 40, 8, 1e-4, 0.3, 0.1).unwrap();
        let f_star = average_reference(&fed);
        let reach = |out: LocalOutput| out.stage_suboptimality.iter().position(|&s| s <= eps).map(|s| s + 1);
        let opts = || LocalOptions { reference_value: Some(f_star), ..Default::default() };
        let config = |c: SolverConfig| c.with_batch(1).with_seed(seed as u64).with_record_every(1_000_000);
        let asvrg = reach(local_asvrg_with(&fed, &config(SolverConfig::dp_asvrg(m, gap, budget)), opts()).unwrap());
        let svrg = reach(local_svrg_with(&fed, &config(SolverConfig::dp_svrg(m, gap, budget)), opts()).unwrap());
        (asvrg, svrg)
    });
    for (seed, (asvrg, svrg)) in results.into_iter().enumerate() {
        let asvrg = asvrg.unwrap_or_else(|| panic!("seed {seed}: accelerated run missed eps"));
        assert!(svrg.is_none_or(|s| asvrg < s), "seed {seed}: {asvrg} vs {svrg:?}");
    }
}
