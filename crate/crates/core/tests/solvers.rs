use std::sync::Arc;

use dproj_core::problems::{make_lcqp, solve_reference_with, FiniteSumQuadratic, LcpProblem, ReferenceOptions};
use dproj_core::projection::{build_subspace, ConstraintSubspace};
use dproj_core::solvers::{
    dp_asvrg_with, dp_sgd, dp_sgd_with, dp_svrg, dp_svrg_with, make_schedule, restart_asvrg_with, run, theta_next,
    IterateEvent, RestartOptions, RunOptions, SolverConfig, ThetaState, Variant,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn reference(problem: &LcpProblem) -> (DVector<f64>, f64) {
    let sol = solve_reference_with(problem, &ReferenceOptions { tol: 1e-12, ..Default::default() }).unwrap();
    (sol.x, sol.value)
}

/// Iterates reported to the observer, in order.
fn iterates(problem: &LcpProblem, config: &SolverConfig, x0: Option<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut seen = Vec::new();
    let mut observer = |e: &IterateEvent<'_>| seen.push(DVector::from_column_slice(e.x));
    run(problem, config, RunOptions { x0, observer: Some(&mut observer), ..Default::default() }).unwrap();
    seen
}

/// The LCQP with `Aᵀx = b` for a random nonzero `b`.
fn shifted_lcqp(seed: u64, p: usize, n: usize, m: usize) -> LcpProblem {
    let base = make_lcqp(seed, p, n, m, 0.5, 1.0).unwrap();
    let a = base.subspace().a_matrix().into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let b = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    LcpProblem::new(base.objective().clone(), build_subspace(&a, &b).unwrap()).unwrap()
}

fn pgd_oracle(problem: &LcpProblem, eta: f64, steps: usize) -> Vec<DVector<f64>> {
    let sub = problem.subspace();
    let shift = sub.feasible_shift().clone();
    let mut x = shift.clone();
    (0..steps)
        .map(|_| {
            let y = &x - problem.gradient(&x) * eta - &shift;
            x = sub.project_null(&y).unwrap() + &shift;
            x.clone()
        })
        .collect()
}

fn max_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax() / (1.0 + y.amax())).fold(0.0, f64::max)
}

#[test]
fn full_batch_sgd_with_unit_gap_is_projected_gradient_descent() {
    let problem = shifted_lcqp(1, 12, 30, 3);
    let eta = 0.1 / problem.smoothness();
    let config = SolverConfig::dp_sgd(200, 1).with_full_batch().with_eta(eta);
    let gap = max_gap(&iterates(&problem, &config, None), &pgd_oracle(&problem, eta, 200));
    assert!(gap <= 1e-12, "{gap}");
}

#[test]
fn full_batch_svrg_with_single_inner_step_is_projected_gradient_descent() {
    let problem = shifted_lcqp(2, 12, 30, 3);
    let eta = 0.2 / problem.smoothness();
    let config = SolverConfig::dp_svrg(1, 1, 150).with_full_batch().with_eta(eta);
    let gap = max_gap(&iterates(&problem, &config, None), &pgd_oracle(&problem, eta, 150));
    assert!(gap <= 1e-12, "{gap}");
}

#[test]
fn sgd_without_strong_convexity_averages_uniformly() {
    let problem = shifted_lcqp(3, 10, 25, 2);
    let config = SolverConfig::dp_sgd(300, 7).with_batch(2).with_seed(4).with_mu(0.0);
    let mut seen = vec![problem.subspace().feasible_shift().clone()];
    let mut observer = |e: &IterateEvent<'_>| seen.push(DVector::from_column_slice(e.x));
    let out =
        dp_sgd_with(&problem, &config, RunOptions { observer: Some(&mut observer), ..Default::default() }).unwrap();
    let mean = seen[..300].iter().sum::<DVector<f64>>() / 300.0;
    let shift = problem.subspace().feasible_shift();
    let expected = problem.subspace().project_null(&(mean - shift)).unwrap() + shift;
    assert!((&out.y_hat - &expected).amax() <= 1e-12 * (1.0 + expected.amax()));
}

fn sgd_floor(problem: &LcpProblem, f_star: f64, eta_l: f64, seed: u64) -> f64 {
    let config = SolverConfig::dp_sgd(100_000, 1)
        .with_batch(1)
        .with_eta(eta_l / problem.smoothness())
        .with_seed(seed)
        .with_record_every(10);
    let out =
        dp_sgd_with(problem, &config, RunOptions { reference_value: Some(f_star), ..Default::default() }).unwrap();
    let rows = out.trace.rows();
    let tail = &rows[rows.len() / 2..rows.len() - 1];
    tail.iter().map(|r| r.suboptimality).sum::<f64>() / tail.len() as f64
}

#[test]
fn halving_the_step_roughly_halves_the_sgd_floor() {
    let ratios: Vec<f64> = dproj_core::par::map(3, |seed| {
        let problem = make_lcqp(seed as u64, 20, 200, 5, 0.1, 1.0).unwrap();
        let (_, f_star) = reference(&problem);
        let coarse = sgd_floor(&problem, f_star, 0.1, 10 + seed as u64);
        let fine = sgd_floor(&problem, f_star, 0.05, 20 + seed as u64);
        assert!(coarse > 1e-8, "no floor: {coarse}");
        fine / coarse
    });
    for r in &ratios {
        assert!((0.3..=0.7).contains(r), "floor ratios {ratios:?}");
    }
}

#[test]
fn svrg_contracts_every_stage_with_inner_loop_of_condition_number() {
    for seed in 0..3 {
        let problem = make_lcqp(seed, 20, 100, 5, 0.1, 1.0).unwrap();
        let (_, f_star) = reference(&problem);
        let m = problem.condition_number().ceil() as usize;
        let eta = 0.25 / problem.smoothness();
        let config = SolverConfig::dp_svrg(m, 1, 12).with_batch(1).with_eta(eta).with_seed(seed);
        let out = dp_svrg_with(&problem, &config, RunOptions { reference_value: Some(f_star), ..Default::default() })
            .unwrap();
        let subs = &out.stage_suboptimality;
        for w in subs[1..].windows(2) {
            if w[0] <= 1e-9 * (1.0 + f_star.abs()) {
                break;
            }
            assert!(w[1] <= 0.9 * w[0], "seed {seed}: {subs:?}");
        }
    }
}

#[test]
fn svrg_started_at_the_optimum_stays_there() {
    let problem = shifted_lcqp(4, 10, 40, 3);
    let (x_star, _) = reference(&problem);
    for gap in [1, 3] {
        let config = SolverConfig::dp_svrg(12, gap, 5).with_full_batch();
        let seen = iterates(&problem, &config, Some(x_star.clone()));
        let drift = seen.iter().map(|x| (x - &x_star).amax()).fold(0.0, f64::max);
        assert!(drift <= 1e-10 * (1.0 + x_star.amax()), "gap {gap}: drift {drift}");
    }
}

/// `½Σλᵢ(xᵢ − x̂ᵢ)²` up to a constant, with log-spaced `λ ∈ [1/κ, 1]`, as a
/// finite sum of one atom per coordinate.
fn diagonal_quadratic(p: usize, kappa: f64) -> (LcpProblem, f64) {
    let lambda: Vec<f64> = (0..p).map(|i| kappa.powf(-(i as f64) / (p - 1) as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let target: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dirs = DMatrix::from_fn(p, p, |i, j| if i == j { (p as f64 * lambda[i]).sqrt() } else { 0.0 });
    let lin = DMatrix::from_fn(p, p, |i, j| if i == j { -(p as f64) * lambda[i] * target[i] } else { 0.0 });
    let q = FiniteSumQuadratic::with_atom_terms(dirs, 0.0, lin).unwrap();
    let f_star = -0.5 * lambda.iter().zip(&target).map(|(l, t)| l * t * t).sum::<f64>();
    let problem = LcpProblem::new(Arc::new(q), ConstraintSubspace::unconstrained(p)).unwrap().with_constants(1.0, 0.0);
    (problem, f_star)
}

#[test]
fn accelerated_full_batch_beats_gradient_descent() {
    let (problem, f_star) = diagonal_quadratic(50, 1e4);
    let eps = 1e-6;
    let mut x = DVector::zeros(50);
    let mut gd = 0;
    while problem.value(&x) - f_star > eps {
        x -= problem.gradient(&x);
        gd += 1;
        assert!(gd < 1_000_000);
    }
    let config = SolverConfig::dp_asvrg(1, 1, gd / 5).with_full_batch();
    let out =
        dp_asvrg_with(&problem, &config, RunOptions { reference_value: Some(f_star), ..Default::default() }).unwrap();
    let acc = out.stage_suboptimality.iter().position(|&s| s <= eps).map(|s| s + 1);
    let acc = acc.unwrap_or_else(|| panic!("accelerated run missed eps within {} iterations", gd / 5));
    assert!(5 * acc <= gd, "accelerated {acc} vs gradient descent {gd}");
}

#[test]
fn theta_stays_below_the_harmonic_bound() {
    for s in 0..10_000u32 {
        let theta = 2.0 / (s as f64 + 2.0);
        let next = theta_next(theta, 0.0).unwrap();
        assert!(next <= 2.0 / (s as f64 + 3.0) * (1.0 + 1e-15), "s = {s}");
    }
}

#[test]
fn restart_at_the_optimum_does_no_more_than_one_restart() {
    let problem = make_lcqp(5, 20, 100, 5, 0.1, 1.0).unwrap();
    let (x_star, f_star) = reference(&problem);
    let config = SolverConfig::dp_asvrg(20, 2, 1).with_batch(1);
    let opts = RestartOptions { reference_value: Some(f_star), x0: Some(x_star), ..Default::default() };
    let out = restart_asvrg_with(&problem, &config, 1e-8, opts).unwrap();
    assert!(out.restarts <= 1);
    assert!(*out.suboptimality.last().unwrap() <= 1e-8);
    assert!(!out.budget_exhausted);
}

#[test]
fn loose_target_returns_without_work() {
    let problem = make_lcqp(5, 20, 100, 5, 0.1, 1.0).unwrap();
    let (_, f_star) = reference(&problem);
    let config = SolverConfig::dp_asvrg(20, 2, 1).with_batch(1);
    let opts = RestartOptions { reference_value: Some(f_star), ..Default::default() };
    let out = restart_asvrg_with(&problem, &config, 1e9, opts).unwrap();
    assert_eq!(out.restarts, 0);
    assert_eq!(out.counters, Default::default());
    assert_eq!(out.y_hat, *problem.subspace().feasible_shift());
}

#[test]
fn each_restart_halves_the_gap() {
    let problem = make_lcqp(2, 50, 400, 10, 0.01, 1.0).unwrap();
    assert!((problem.condition_number() - 100.0).abs() < 1e-9);
    let (_, f_star) = reference(&problem);
    let config = SolverConfig::dp_asvrg(400, 4, 1).with_batch(1).with_seed(3);
    let opts = RestartOptions { reference_value: Some(f_star), ..Default::default() };
    let out = restart_asvrg_with(&problem, &config, 1e-12, opts).unwrap();
    let subs = &out.suboptimality;
    assert!(subs.len() >= 6, "{subs:?}");
    for w in subs[..6].windows(2) {
        assert!(w[1] <= 0.5 * w[0], "{subs:?}");
    }
}

fn feasibility_tol(x: &DVector<f64>) -> f64 {
    1e-9 * (1.0 + x.norm())
}

#[test]
fn iterates_are_feasible_at_schedule_hits() {
    let problem = shifted_lcqp(6, 15, 40, 4);
    for config in [
        SolverConfig::dp_sgd(97, 6).with_batch(2),
        SolverConfig::dp_svrg(23, 5, 4).with_batch(1),
        SolverConfig::dp_asvrg(23, 5, 4).with_batch(1),
    ] {
        let m = if config.variant == Variant::DpSgd { config.total_iters } else { config.inner_m };
        let schedule = make_schedule(m, config.gap).unwrap();
        let mut hits = 0;
        let mut observer = |e: &IterateEvent<'_>| {
            let t = e.iter as usize - e.stage as usize * if config.variant == Variant::DpSgd { 0 } else { m };
            if schedule.contains(t) {
                let x = DVector::from_column_slice(e.x);
                assert!(problem.feasibility_residual(&x) <= feasibility_tol(&x));
                if let Some(u) = e.u {
                    let u = DVector::from_column_slice(u);
                    assert!(problem.feasibility_residual(&u) <= feasibility_tol(&u));
                }
                hits += 1;
            }
        };
        let out = run(&problem, &config, RunOptions { observer: Some(&mut observer), ..Default::default() }).unwrap();
        assert_eq!(hits, schedule.len() * config.stages.max(1));
        assert!(problem.feasibility_residual(&out.y_hat) <= feasibility_tol(&out.y_hat));
        for row in out.trace.rows() {
            assert!(row.feasibility <= 1e-9 * (1.0 + out.y_hat.norm()) * 10.0);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let problem = shifted_lcqp(7, 12, 30, 3);
    let (_, f_star) = reference(&problem);
    for config in [
        SolverConfig::dp_sgd(200, 4).with_batch(3).with_seed(9),
        SolverConfig::dp_svrg(20, 4, 5).with_batch(2).with_seed(9),
        SolverConfig::dp_asvrg(20, 4, 5).with_batch(2).with_seed(9),
    ] {
        let go = || run(&problem, &config, RunOptions { reference_value: Some(f_star), ..Default::default() }).unwrap();
        let (a, b) = (go(), go());
        assert_eq!(a.y_hat, b.y_hat);
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.trace.len(), b.trace.len());
        for (r, s) in a.trace.rows().iter().zip(b.trace.rows()) {
            assert_eq!(
                (r.counters, r.suboptimality.to_bits(), r.feasibility.to_bits()),
                (s.counters, s.suboptimality.to_bits(), s.feasibility.to_bits())
            );
        }
        let other = run(&problem, &config.clone().with_seed(10), RunOptions::default()).unwrap();
        assert_ne!(a.y_hat, other.y_hat);
    }
}

#[test]
fn sgd_counts_match_the_schedule() {
    let problem = make_lcqp(8, 10, 20, 2, 0.5, 1.0).unwrap();
    let out = dp_sgd(&problem, &SolverConfig::dp_sgd(103, 10).with_batch(4)).unwrap();
    assert_eq!(out.counters.iterations, 103);
    assert_eq!(out.counters.gradients, 103 * 4);
    assert_eq!(out.counters.projections, 11 + 1);
    assert_eq!(out.counters.comm_rounds, 0);
}

#[test]
fn svrg_full_batch_counts() {
    let problem = make_lcqp(8, 10, 20, 2, 0.5, 1.0).unwrap();
    let out = dp_svrg(&problem, &SolverConfig::dp_svrg(6, 4, 3).with_full_batch()).unwrap();
    assert_eq!(out.counters.iterations, 18);
    assert_eq!(out.counters.gradients, 3 * (20 + 2 * 6 * 20));
    assert_eq!(out.counters.projections, 3 + 3 * 2);
}

fn small_problem() -> &'static LcpProblem {
    use std::sync::OnceLock;
    static P: OnceLock<LcpProblem> = OnceLock::new();
    P.get_or_init(|| shifted_lcqp(9, 8, 15, 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn variance_reduced_counter_identities(
        m in 1usize..40, gap in 1usize..12, stages in 1usize..5, batch in 1usize..4, seed in any::<u64>(), accel in any::<bool>()
    ) {
        prop_assume!(gap <= m);
        let problem = small_problem();
        let n = problem.n_atoms();
        let config = if accel { SolverConfig::dp_asvrg(m, gap, stages) } else { SolverConfig::dp_svrg(m, gap, stages) };
        let out = run(problem, &config.with_batch(batch).with_seed(seed), RunOptions::default()).unwrap();
        let (m, s, b) = (m as u64, stages as u64, batch as u64);
        prop_assert_eq!(out.counters.iterations, m * s);
        prop_assert_eq!(out.counters.stages, s);
        prop_assert_eq!(out.counters.gradients, (2 * m * b + n) * s);
        prop_assert_eq!(out.counters.projections, s + m.div_ceil(gap as u64) * s);
        prop_assert_eq!(out.counters.comm_rounds, 0);
        let last = out.trace.last().unwrap();
        prop_assert_eq!(last.counters, out.counters);
    }

    #[test]
    fn sgd_counter_identities(total in 1usize..300, gap in 1usize..20, batch in 1usize..4, seed in any::<u64>()) {
        prop_assume!(gap <= total);
        let out = dp_sgd(small_problem(), &SolverConfig::dp_sgd(total, gap).with_batch(batch).with_seed(seed)).unwrap();
        prop_assert_eq!(out.counters.iterations, total as u64);
        prop_assert_eq!(out.counters.gradients, (total * batch) as u64);
        prop_assert_eq!(out.counters.projections, (total.div_ceil(gap) + 1) as u64);
    }

    #[test]
    fn schedules_respect_the_gap(total in 1usize..500, gap in 1usize..50) {
        prop_assume!(gap <= total);
        let s = make_schedule(total, gap).unwrap();
        let idx = s.indices();
        prop_assert_eq!(*idx.last().unwrap(), total);
        let mut prev = 0;
        for &i in idx {
            prop_assert!(i > prev && i - prev <= gap);
            prev = i;
        }
        prop_assert_eq!(idx.len(), total.div_ceil(gap));
    }

    #[test]
    fn recursive_theta_invariants(delta in prop_oneof![Just(0.0), 0.0f64..0.3, (1usize..10_000).prop_map(|s| (s as f64 + 1.0).ln() / (s as f64 + 1.0))], bump in 0.0f64..1.0) {
        let theta0 = 2.0 * delta + bump * (1.0 - delta);
        let mut state = ThetaState::recursive(delta, theta0).unwrap();
        let mut theta = state.current();
        for _ in 0..2_000 {
            let next = state.advance().unwrap();
            prop_assert!(next >= 2.0 * delta - 1e-12 && next <= 1.0 + delta + 1e-12);
            prop_assert!(next <= theta + 1e-15);
            prop_assert!(next - 2.0 * delta <= (1.0 - delta) * (theta - 2.0 * delta) + 1e-12);
            theta = next;
        }
    }
}
