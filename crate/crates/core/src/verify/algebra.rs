use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{err_str, fail, CheckResult};
use crate::par;
use crate::problems::{
    federated_heterogeneity, lift_consensus, make_constrained_logreg, make_federated_logreg, make_federated_quadratics,
    make_lcqp, variance_at_optimum, LcpProblem,
};
use crate::projection::{consensus_constraint_matrix, consensus_project, ConstraintSubspace};
use crate::rng::{normal, stream};
use crate::solvers::engine::control_variate;
use crate::solvers::theta_next;

/// Null-space projector under test.
pub type NullProjector = dyn Fn(&ConstraintSubspace, &DVector<f64>) -> DVector<f64> + Sync;

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Linearity, non-expansiveness, orthogonal decomposition and idempotency
/// of both projectors on random subspaces, plus `P_A = AA⁺` against an SVD
/// pseudo-inverse.
pub fn projector_algebra(subspaces: usize) -> CheckResult {
    projector_algebra_with(subspaces, &|s, x| s.project_null(x).expect("dimension checked"))
}

/// Like [`projector_algebra`] with a replaceable null-space projector, so a
/// deliberately broken one can be shown to fail.
pub fn projector_algebra_with(subspaces: usize, null: &NullProjector) -> CheckResult {
    let results = par::map(subspaces, |seed| one_subspace(seed as u64, null));
    let mut worst_oracle: f64 = 0.0;
    for r in results {
        worst_oracle = worst_oracle.max(r?);
    }
    Ok(format!("{subspaces} subspaces, worst pseudo-inverse gap {worst_oracle:.1e}"))
}

fn one_subspace(seed: u64, null: &NullProjector) -> std::result::Result<f64, String> {
    const TOL: f64 = 1e-10;
    let mut rng = stream(seed, 0x5ab5);
    let p = rng.random_range(2..=64usize);
    let m = rng.random_range(1..=16usize.min(p - 1));
    let mut a = DMatrix::from_fn(p, m, |_, _| normal(&mut rng));
    if seed % 4 == 3 && m >= 3 {
        let dependent = a.column(0) + a.column(1) * 0.5;
        a.set_column(m - 1, &dependent);
    }
    let b = a.transpose() * gauss(&mut rng, p);
    let sub = ConstraintSubspace::new(&a, &b).map_err(err_str)?;
    let range = |x: &DVector<f64>| sub.project_range(x).expect("dimension checked");
    let perp = |x: &DVector<f64>| null(&sub, x);
    let (x, y) = (gauss(&mut rng, p), gauss(&mut rng, p));
    let (alpha, beta) = (normal(&mut rng), normal(&mut rng));
    let at = |what: &str, gap: f64, scale: f64| -> std::result::Result<(), String> {
        if gap <= TOL * scale {
            Ok(())
        } else {
            fail(format!("{what} violated on subspace {seed} (p={p}, m={m}): gap {gap:.3e}"))
        }
    };
    let combo = &x * alpha + &y * beta;
    let scale = 1.0 + alpha.abs() * x.norm() + beta.abs() * y.norm();
    for (name, proj) in [("range", &range as &dyn Fn(&DVector<f64>) -> DVector<f64>), ("null", &perp)] {
        let (px, py) = (proj(&x), proj(&y));
        at(&format!("linearity of the {name} projector"), (proj(&combo) - (&px * alpha + &py * beta)).norm(), scale)?;
        let expansion = (&px - &py).norm() - (&x - &y).norm();
        at(&format!("non-expansiveness of the {name} projector"), expansion.max(0.0), (&x - &y).norm())?;
        at(&format!("idempotency of the {name} projector"), (proj(&px) - &px).norm(), x.norm())?;
    }
    let (rx, nx) = (range(&x), perp(&x));
    at("orthogonal decomposition (sum)", (&rx + &nx - &x).norm(), x.norm())?;
    at("orthogonal decomposition (inner product)", rx.dot(&nx).abs(), x.norm_squared())?;
    let pinv = a.clone().pseudo_inverse(1e-10 * a.norm()).map_err(|e| e.to_string())?;
    let oracle = &a * (pinv * &x);
    let gap = (&rx - oracle).norm() / x.norm();
    if gap > 1e-9 {
        return fail(format!("range projector differs from the pseudo-inverse oracle on subspace {seed}: {gap:.3e}"));
    }
    Ok(gap)
}

/// Block averaging equals the explicit projector built from the stacked
/// difference constraints.
pub fn consensus_equivalence() -> CheckResult {
    let mut worst: f64 = 0.0;
    for n in 2..=5 {
        for d in 1..=3 {
            let a = consensus_constraint_matrix(n, d);
            let explicit = ConstraintSubspace::new(&a, &DVector::zeros(a.ncols())).map_err(err_str)?;
            let implicit = ConstraintSubspace::consensus(n, d).map_err(err_str)?;
            let mut rng = stream((n * 10 + d) as u64, 0xc0);
            for _ in 0..20 {
                let x = gauss(&mut rng, n * d) * 3.0;
                let e = explicit.project_null(&x).map_err(err_str)?;
                let c = consensus_project(&x, n, d).map_err(err_str)?;
                let s = implicit.project_null(&x).map_err(err_str)?;
                let gap = (&e - &c).amax().max((&c - &s).amax());
                worst = worst.max(gap);
                if gap > 1e-12 {
                    return fail(format!("block average differs from explicit projector at n={n}, d={d}: {gap:.3e}"));
                }
            }
        }
    }
    Ok(format!("(n, d) in 2..5 x 1..3, worst gap {worst:.1e}"))
}

/// At the consensus optimum the lifted problem's projected second moments
/// equal `σ*²` and `nζ*² + (n−1)σ*²`.
pub fn variance_identities(instances: usize) -> CheckResult {
    let results = par::map(instances, |i| -> std::result::Result<f64, String> {
        let seed = i as u64;
        let n = 2 + i % 4;
        let fed = if i % 2 == 0 {
            make_federated_quadratics(seed, n, 2 + i % 3, 5, 0.3, 1.0, 0.7)
        } else {
            make_federated_logreg(seed, n, 5, 2, 0.05, 0.8)
        }
        .map_err(err_str)?;
        let x = fed.global_minimizer(1e-13).map_err(err_str)?;
        let (sigma, zeta) = federated_heterogeneity(&fed, &x).map_err(err_str)?;
        let lifted = lift_consensus(&fed).map_err(err_str)?;
        let stacked = DVector::from_fn(n * x.len(), |r, _| x[r % x.len()]);
        let (perp, range) = variance_at_optimum(&lifted, &stacked).map_err(err_str)?;
        let want_range = n as f64 * zeta + (n as f64 - 1.0) * sigma;
        let e1 = (perp - sigma).abs() / sigma.abs().max(1e-300);
        let e2 = (range - want_range).abs() / want_range.abs().max(1e-300);
        if e1 > 1e-8 || e2 > 1e-8 {
            return fail(format!(
                "instance {i}: null-space moment {perp:.6e} vs {sigma:.6e}, range moment {range:.6e} vs {want_range:.6e}"
            ));
        }
        Ok(e1.max(e2))
    });
    let mut worst: f64 = 0.0;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(format!("{instances} instances, worst relative error {worst:.1e}"))
}

/// Boundedness, monotonicity, contraction towards `2δ`, the `2/(s+2)` bound
/// at `δ = 0`, and the defining quadratic, along `steps` recursions.
pub fn theta_sequence(steps: usize) -> CheckResult {
    const TOL: f64 = 1e-12;
    for delta in [0.0, 0.01, 0.3] {
        for theta0 in [1.0, 1.0 + delta] {
            let mut theta: f64 = theta0;
            for s in 0..steps {
                let next = theta_next(theta, delta).map_err(err_str)?;
                let ctx = format!("delta={delta}, theta0={theta0}, step {s}");
                if !(next >= 2.0 * delta - TOL && next <= 1.0 + delta + TOL) {
                    return fail(format!("boundedness violated at {ctx}: {next}"));
                }
                if next > theta + TOL {
                    return fail(format!("monotonicity violated at {ctx}: {theta} -> {next}"));
                }
                if next - 2.0 * delta > (1.0 - delta) * (theta - 2.0 * delta) + TOL {
                    return fail(format!("contraction violated at {ctx}: {theta} -> {next}"));
                }
                if delta == 0.0 && theta0 == 1.0 && next > 2.0 / (s as f64 + 3.0) + TOL {
                    return fail(format!("2/(s+2) bound violated at {ctx}: {next}"));
                }
                let lhs = (1.0 - next + delta) / ((1.0 - delta) * next * next);
                let rhs = 1.0 / (theta * theta);
                if (lhs - rhs).abs() > TOL * rhs {
                    return fail(format!("defining equation violated at {ctx}: {lhs} vs {rhs}"));
                }
                theta = next;
            }
        }
    }
    Ok(format!("{steps} steps at delta in {{0, 0.01, 0.3}}"))
}

/// The finite-sum average of `P(∇F(x;i) − ∇F(x̃;i) + P∇F(x̃))` over all
/// atoms equals `P∇F(x)`.
pub fn control_variate_unbiased(states: usize) -> CheckResult {
    let problems: Vec<LcpProblem> = vec![
        make_lcqp(11, 20, 40, 5, 0.1, 1.0).map_err(err_str)?,
        make_constrained_logreg(12, 30, 4, 3, 4, 0.01).map_err(err_str)?,
    ];
    let mut worst: f64 = 0.0;
    for (k, problem) in problems.iter().enumerate() {
        let dim = problem.dim();
        let obj = problem.objective().as_ref();
        let sub = problem.subspace();
        let n = problem.n_atoms();
        let mut rng = stream(k as u64, 0xcf);
        for state in 0..states.div_ceil(problems.len()) {
            let x = gauss(&mut rng, dim);
            let anchor = gauss(&mut rng, dim);
            let mut h = problem.gradient(&anchor).as_slice().to_vec();
            sub.project_null_mut(&mut h);
            let mut sum = vec![0.0; dim];
            let (mut g, mut scratch) = (vec![0.0; dim], vec![0.0; dim]);
            for flat in 0..n {
                let atom = problem.atom_tuple(flat);
                control_variate(
                    obj,
                    x.as_slice(),
                    anchor.as_slice(),
                    Some(&atom),
                    atom.len(),
                    &h,
                    &mut g,
                    &mut scratch,
                );
                sub.project_null_mut(&mut g);
                sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            }
            let mut want = problem.gradient(&x).as_slice().to_vec();
            sub.project_null_mut(&mut want);
            let scale = 1.0 + want.iter().map(|v| v * v).sum::<f64>().sqrt();
            let gap = sum.iter().zip(&want).map(|(s, w)| (s / n as f64 - w).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(gap);
            if gap > 1e-10 {
                return fail(format!("projected control variate biased on problem {k}, state {state}: {gap:.3e}"));
            }
        }
    }
    Ok(format!("{states} states on a quadratic and a logistic problem, worst gap {worst:.1e}"))
}
