use super::{err_str, fail, CheckResult};
use crate::metrics::complexity_to_eps;
use crate::par;
use crate::problems::{make_constrained_logreg, make_lcqp, solve_reference, LcpProblem};
use crate::solvers::{dp_sgd_with, restart_asvrg_with, run, RestartOptions, RunOptions, SolverConfig};

fn optimum(problem: &LcpProblem) -> Result<f64, String> {
    let x = solve_reference(problem, 1e-12).map_err(err_str)?;
    Ok(problem.value(&x))
}

fn with_reference<'a>(f_star: f64) -> RunOptions<'a> {
    RunOptions { reference_value: Some(f_star), ..Default::default() }
}

fn collect<T>(results: Vec<Result<T, String>>) -> Result<Vec<T>, String> {
    results.into_iter().collect()
}

/// Constrained logistic regression with weight decay `L/1000`: constant-step
/// DP-SGD plateaus while DP-SVRG gets three orders of magnitude below the
/// plateau within 40 stages.
pub fn noise_floor() -> CheckResult {
    let unregularized = make_constrained_logreg(1, 500, 20, 2, 5, 0.0).map_err(err_str)?;
    let problem = make_constrained_logreg(1, 500, 20, 2, 5, unregularized.smoothness() / 1000.0).map_err(err_str)?;
    let f_star = optimum(&problem)?;
    let sgd = SolverConfig::dp_sgd(200_000, 10).with_batch(1).with_seed(1).with_record_every(10);
    let out = dp_sgd_with(&problem, &sgd, with_reference(f_star)).map_err(err_str)?;
    let rows: Vec<f64> = out.trace.rows().iter().map(|r| r.suboptimality).collect();
    let iterates = &rows[..rows.len() - 1];
    let window = |from: usize, to: usize| {
        let w = &iterates[iterates.len() * from / 10..iterates.len() * to / 10];
        w.iter().sum::<f64>() / w.len() as f64
    };
    let (earlier, floor) = (window(6, 8), window(8, 10));
    if !(floor > 0.0 && floor >= 0.5 * earlier) {
        return fail(format!("DP-SGD did not plateau: tail means {earlier:.3e} then {floor:.3e}"));
    }
    let svrg = SolverConfig::dp_svrg(20_000, 10, 40).with_batch(1).with_seed(1);
    let out = run(&problem, &svrg, with_reference(f_star)).map_err(err_str)?;
    let best = out.stage_suboptimality.iter().copied().fold(f64::INFINITY, f64::min);
    let detail = format!("kappa {:.0}, SGD floor {floor:.3e}, SVRG best {best:.3e}", problem.condition_number());
    if best <= 1e-3 * floor {
        Ok(detail)
    } else {
        fail(detail)
    }
}

/// DP-SVRG on strongly convex quadratics with `m = N`: each stage after the
/// first contracts the suboptimality by at least 0.9.
pub fn svrg_linear_rate() -> CheckResult {
    let runs = par::map(6, |i| -> Result<f64, String> {
        let seed = (i / 2) as u64;
        let gap = if i % 2 == 0 { 1 } else { 5 };
        let problem = make_lcqp(seed, 50, 200, 10, 0.1, 1.0).map_err(err_str)?;
        let f_star = optimum(&problem)?;
        let config = SolverConfig::dp_svrg(200, gap, 15).with_batch(1).with_seed(seed);
        let out = run(&problem, &config, with_reference(f_star)).map_err(err_str)?;
        let resolution = 1e-9 * (1.0 + f_star.abs());
        let mut worst: f64 = 0.0;
        for (s, w) in out.stage_suboptimality.windows(2).enumerate() {
            if w[0] <= resolution {
                break;
            }
            let ratio = w[1] / w[0];
            worst = worst.max(ratio);
            if ratio > 0.9 {
                return fail(format!("seed {seed}, E={gap}: stage {} -> {} ratio {ratio:.3}", s + 1, s + 2));
            }
        }
        Ok(worst)
    });
    let worst = collect(runs)?.into_iter().fold(0.0, f64::max);
    Ok(format!("kappa 10, 3 seeds, E in {{1, 5}}, worst stage ratio {worst:.3}"))
}

/// With a common step size, projections to reach `1e-6` do not increase as
/// the projection gap grows while `N/E ≥ κ`.
pub fn projection_trend() -> CheckResult {
    let problem = make_lcqp(3, 50, 1000, 10, 0.1, 1.0).map_err(err_str)?;
    let f_star = optimum(&problem)?;
    let eta = 0.1 / problem.smoothness();
    let gaps = [1usize, 2, 5, 10];
    let counts = par::map(gaps.len(), |i| -> Result<u64, String> {
        let config = SolverConfig::dp_svrg(1000, gaps[i], 60).with_batch(1).with_seed(3).with_eta(eta);
        let out = run(&problem, &config, with_reference(f_star)).map_err(err_str)?;
        complexity_to_eps(&out.trace, 1e-6)
            .projections_to_eps
            .ok_or_else(|| format!("E={} never reached 1e-6", gaps[i]))
    });
    let counts = collect(counts)?;
    let detail = format!("projections to 1e-6 at E = 1, 2, 5, 10: {counts:?}");
    if counts.windows(2).all(|w| w[1] <= w[0]) {
        Ok(detail)
    } else {
        fail(detail)
    }
}

/// Restarted DP-ASVRG at `κ = 100`, `E = 4`, `m = κE`: five consecutive
/// restarts each at least halve the suboptimality.
pub fn restart_halving() -> CheckResult {
    let runs = par::map(3, |i| -> Result<f64, String> {
        let seed = i as u64;
        let problem = make_lcqp(seed, 50, 400, 10, 0.01, 1.0).map_err(err_str)?;
        let f_star = optimum(&problem)?;
        let config = SolverConfig::dp_asvrg(400, 4, 1).with_batch(1).with_seed(seed);
        let opts = RestartOptions { reference_value: Some(f_star), ..Default::default() };
        let out = restart_asvrg_with(&problem, &config, 1e-12, opts).map_err(err_str)?;
        if out.suboptimality.len() < 6 {
            return fail(format!("seed {seed}: only {} restarts ran", out.restarts));
        }
        let mut worst: f64 = 0.0;
        for (r, w) in out.suboptimality.windows(2).take(5).enumerate() {
            let ratio = w[1] / w[0];
            worst = worst.max(ratio);
            if ratio > 0.5 {
                return fail(format!("seed {seed}: restart {} reduced suboptimality by only {ratio:.3}", r + 1));
            }
        }
        Ok(worst)
    });
    let worst = collect(runs)?.into_iter().fold(0.0, f64::max);
    Ok(format!("3 seeds, worst ratio over 5 restarts {worst:.3}"))
}

/// On a `κ = 10⁴` quadratic with the same `m`, `E` and stage budget,
/// DP-ASVRG reaches `1e-6` in strictly fewer stages than DP-SVRG.
pub fn acceleration() -> CheckResult {
    const BUDGET: usize = 3000;
    let runs = par::map(6, |i| -> Result<Option<usize>, String> {
        let seed = (i / 2) as u64;
        let problem = make_lcqp(seed, 50, 200, 10, 1e-4, 1.0).map_err(err_str)?;
        let f_star = optimum(&problem)?;
        let config =
            if i % 2 == 0 { SolverConfig::dp_svrg(200, 2, BUDGET) } else { SolverConfig::dp_asvrg(200, 2, BUDGET) };
        let out = run(&problem, &config.with_batch(1).with_seed(seed), with_reference(f_star)).map_err(err_str)?;
        Ok(out.stage_suboptimality.iter().position(|&s| s <= 1e-6).map(|s| s + 1))
    });
    let stages = collect(runs)?;
    let mut detail = Vec::new();
    for (seed, pair) in stages.chunks(2).enumerate() {
        let (svrg, asvrg) = (pair[0], pair[1]);
        detail.push(format!("seed {seed}: svrg {svrg:?} asvrg {asvrg:?}"));
        let faster = match (asvrg, svrg) {
            (Some(a), Some(s)) => a < s,
            (Some(_), None) => true,
            _ => false,
        };
        if !faster {
            return fail(format!("no acceleration; {}", detail.join(", ")));
        }
    }
    Ok(format!("stages to 1e-6 within {BUDGET}: {}", detail.join(", ")))
}
