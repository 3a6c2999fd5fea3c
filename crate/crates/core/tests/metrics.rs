use dproj_core::metrics::{complexity_to_eps, read_csv, record, write_csv, ComplexityCounters, RunTrace};
use dproj_core::problems::{make_constrained_logreg, solve_reference_with, ReferenceOptions};
use dproj_core::solvers::{dp_svrg_with, RunOptions, SolverConfig};
use proptest::prelude::*;

#[test]
fn thousand_appends_keep_counters_sorted() {
    let mut trace = RunTrace::new("r", "dp_svrg");
    let mut c = ComplexityCounters::default();
    for i in 0..1000u64 {
        c.iterations += 3;
        c.projections += i % 2;
        c.gradients += 7;
        c.stages = i / 10;
        record(&mut trace, &c, 1.0 / (i + 1) as f64, 0.0).unwrap();
    }
    assert_eq!(trace.len(), 1000);
    for w in trace.rows().windows(2) {
        let (a, b) = (w[0].counters, w[1].counters);
        assert!(a.iterations <= b.iterations && a.projections <= b.projections);
        assert!(a.gradients <= b.gradients && a.stages <= b.stages && a.comm_rounds <= b.comm_rounds);
    }
}

#[test]
fn svrg_projections_to_eps_do_not_grow_with_the_gap() {
    let problem = make_constrained_logreg(2, 500, 20, 2, 10, 0.02).unwrap();
    let n = problem.n_atoms() as usize;
    assert!(problem.condition_number() <= (n / 10) as f64, "kappa {}", problem.condition_number());
    let sol = solve_reference_with(&problem, &ReferenceOptions { tol: 1e-12, ..Default::default() }).unwrap();
    let eta = 0.1 / problem.smoothness();
    let projections: Vec<u64> = dproj_core::par::map(4, |i| {
        let gap = [1, 2, 5, 10][i];
        let config = SolverConfig::dp_svrg(n, gap, 60).with_batch(1).with_eta(eta).with_seed(1);
        let out =
            dp_svrg_with(&problem, &config, RunOptions { reference_value: Some(sol.value), ..Default::default() })
                .unwrap();
        let row = complexity_to_eps(&out.trace, 1e-6);
        row.projections_to_eps.unwrap_or_else(|| panic!("E = {gap} missed eps: {:?}", out.stage_suboptimality))
    });
    for w in projections.windows(2) {
        assert!(w[1] <= w[0], "{projections:?}");
    }
}

fn trace_strategy() -> impl Strategy<Value = RunTrace> {
    let row = (0u64..5, 0u64..5, 0u64..50, 0u64..3, -1e3f64..1e3, 0f64..1.0, any::<u64>());
    ("[a-z_]{1,8}", prop::collection::vec(row, 0..40)).prop_map(|(id, steps)| {
        let mut trace = RunTrace::new(format!("{id}__s1"), "dp_asvrg");
        let mut c = ComplexityCounters::default();
        for (di, dp, dg, ds, sub, feas, wall) in steps {
            c.iterations += di;
            c.projections += dp;
            c.gradients += dg;
            c.stages += ds;
            c.comm_rounds += dp / 2;
            trace.record(&c, sub, feas, wall).unwrap();
        }
        trace
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_preserves_comparisons(traces in prop::collection::vec(trace_strategy(), 1..4), eps in -1e3f64..1e3) {
        let mut traces = traces;
        for (i, t) in traces.iter_mut().enumerate() {
            t.run_id = format!("{}{i}", t.run_id);
        }
        let mut buf = Vec::new();
        write_csv(&traces, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let nonempty: Vec<&RunTrace> = traces.iter().filter(|t| !t.is_empty()).collect();
        prop_assert_eq!(back.len(), nonempty.len());
        for (a, b) in nonempty.into_iter().zip(&back) {
            prop_assert_eq!(a, b);
            prop_assert_eq!(complexity_to_eps(a, eps), complexity_to_eps(b, eps));
        }
    }
}
