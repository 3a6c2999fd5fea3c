use nalgebra::{DMatrix, DVector};

use super::{err_str, fail, CheckResult};
use crate::federated::{
    equivalence_harness, equivalence_harness_with, local_asvrg_with, local_sgd_with, local_svrg_with, LocalOptions,
};
use crate::problems::{make_federated_quadratics, make_lcqp, LcpProblem};
use crate::projection::ConstraintSubspace;
use crate::rng::{normal, stream, AtomSampler};
use crate::solvers::{run, IterateEvent, RunOptions, SolverConfig, Variant};

const ITERS: usize = 200;
const TOL: f64 = 1e-10;

/// Projection onto `{x : Aᵀx = b}` through the normal equations, independent
/// of the orthonormal-basis projector used by the solvers.
struct NormalEquations {
    a: DMatrix<f64>,
    b: DVector<f64>,
    gram: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl NormalEquations {
    fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let gram = (a.transpose() * &a).lu();
        Self { a, b, gram }
    }

    fn onto_affine(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = self.a.transpose() * v - &self.b;
        v - &self.a * self.gram.solve(&r).expect("full column rank")
    }

    fn onto_null(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = self.a.transpose() * v;
        v - &self.a * self.gram.solve(&r).expect("full column rank")
    }
}

/// A generated quadratic with a nonzero right-hand side, so the shifted
/// coordinates of the solvers are exercised.
fn shifted_lcqp() -> Result<(LcpProblem, NormalEquations), String> {
    let base = make_lcqp(21, 12, 40, 4, 0.5, 1.0).map_err(err_str)?;
    let a = base.subspace().a_matrix().into_owned();
    let mut rng = stream(21, 0xb);
    let b = a.transpose() * DVector::from_fn(12, |_, _| normal(&mut rng));
    let sub = ConstraintSubspace::new(&a, &b).map_err(err_str)?;
    let problem = LcpProblem::new(base.objective().clone(), sub)
        .map_err(err_str)?
        .with_constants(base.smoothness(), base.strong_convexity());
    Ok((problem, NormalEquations::new(a, b)))
}

fn observed(problem: &LcpProblem, config: &SolverConfig) -> Result<Vec<DVector<f64>>, String> {
    let mut xs = Vec::new();
    let mut obs = |e: &IterateEvent<'_>| xs.push(DVector::from_column_slice(e.x));
    run(problem, config, RunOptions { observer: Some(&mut obs), ..Default::default() }).map_err(err_str)?;
    Ok(xs)
}

fn max_gap(what: &str, got: &[DVector<f64>], want: &[DVector<f64>]) -> Result<f64, String> {
    if got.len() != want.len() {
        return fail(format!("{what}: {} iterates vs {} expected", got.len(), want.len()));
    }
    let mut worst: f64 = 0.0;
    for (t, (g, w)) in got.iter().zip(want).enumerate() {
        let gap = (g - w).amax();
        worst = worst.max(gap);
        if gap > TOL {
            return fail(format!("{what}: iterate {} differs by {gap:.3e}", t + 1));
        }
    }
    Ok(worst)
}

/// Projected SGD with the same atom draws.
fn projected_sgd_oracle(problem: &LcpProblem, proj: &NormalEquations, seed: u64, batch: usize) -> Vec<DVector<f64>> {
    let obj = problem.objective();
    let eta = 1.0 / (10.0 * problem.smoothness());
    let mut sampler = AtomSampler::new(seed, &obj.stream_keys(), &obj.atom_shape());
    let mut atoms = Vec::new();
    let mut x = proj.onto_affine(&DVector::zeros(problem.dim()));
    let mut out = Vec::with_capacity(ITERS);
    for _ in 0..ITERS {
        sampler.draw(batch, &mut atoms);
        let mut g = DVector::zeros(x.len());
        for i in &atoms {
            obj.add_atom_gradient(x.as_slice(), &[*i], g.as_mut_slice());
        }
        x = proj.onto_affine(&(&x - g * (eta / batch as f64)));
        out.push(x.clone());
    }
    out
}

/// Projected accelerated gradient with the estimate-sequence momentum
/// `θ' = √(θ² + θ⁴/4) − θ²/2`, starting from `θ₀ = 1 − 2ηL/(1 − ηL)`.
fn accelerated_oracle(problem: &LcpProblem, proj: &NormalEquations) -> Vec<DVector<f64>> {
    let l = problem.smoothness();
    let eta = 0.25 / l;
    let mut theta = 1.0 - 2.0 * eta * l / (1.0 - eta * l);
    let mut snapshot = proj.onto_affine(&DVector::zeros(problem.dim()));
    let mut u = snapshot.clone();
    let mut out = Vec::with_capacity(ITERS);
    for _ in 0..ITERS {
        let h = proj.onto_null(&problem.gradient(&snapshot));
        u = proj.onto_affine(&(&u - h * (eta / theta)));
        snapshot = proj.onto_affine(&(&snapshot + (&u - &snapshot) * theta));
        out.push(snapshot.clone());
        let t2 = theta * theta;
        theta = (t2 + t2 * t2 / 4.0).sqrt() - t2 / 2.0;
    }
    out
}

/// DP-SGD at `E = 1` against projected SGD, full-batch DP-ASVRG at
/// `m = E = 1` against projected accelerated gradient, and single-worker
/// local methods against their single-machine counterparts.
pub fn reductions() -> CheckResult {
    let (problem, proj) = shifted_lcqp()?;
    let sgd = observed(&problem, &SolverConfig::dp_sgd(ITERS, 1).with_batch(3).with_seed(5))?;
    let g1 = max_gap("DP-SGD at E=1 vs projected SGD", &sgd, &projected_sgd_oracle(&problem, &proj, 5, 3))?;

    let config = SolverConfig::dp_asvrg(1, 1, ITERS).with_full_batch().with_mu(0.0);
    let acc = observed(&problem, &config)?;
    let g2 = max_gap("DP-ASVRG at m=E=1 vs accelerated gradient", &acc, &accelerated_oracle(&problem, &proj))?;

    let fed = make_federated_quadratics(8, 1, 4, 15, 0.4, 1.0, 0.3).map_err(err_str)?;
    let single = LcpProblem::new(fed.locals()[0].clone(), ConstraintSubspace::unconstrained(4)).map_err(err_str)?;
    let mut g3: f64 = 0.0;
    for (variant, config) in variant_configs(9) {
        let want = observed(&single, &config)?;
        let mut got = Vec::new();
        let mut obs = |e: &IterateEvent<'_>| got.push(DVector::from_column_slice(e.x));
        let opts = LocalOptions { observer: Some(&mut obs), ..Default::default() };
        match variant {
            Variant::DpSgd => local_sgd_with(&fed, &config, opts),
            Variant::DpSvrg => local_svrg_with(&fed, &config, opts),
            Variant::DpAsvrg => local_asvrg_with(&fed, &config, opts),
        }
        .map_err(err_str)?;
        g3 = g3.max(max_gap(&format!("one-worker local {} vs single machine", variant.name()), &got, &want)?);
    }
    Ok(format!("worst gaps: sgd {g1:.1e}, accelerated {g2:.1e}, one worker {g3:.1e}"))
}

/// 200 iterations of each variant with batch 2.
fn variant_configs(seed: u64) -> [(Variant, SolverConfig); 3] {
    [
        (Variant::DpSgd, SolverConfig::dp_sgd(ITERS, 4).with_batch(2).with_seed(seed)),
        (Variant::DpSvrg, SolverConfig::dp_svrg(40, 4, 5).with_batch(2).with_seed(seed)),
        (Variant::DpAsvrg, SolverConfig::dp_asvrg(40, 4, 5).with_batch(2).with_seed(seed)),
    ]
}

/// Local methods over four workers against the lifted solvers, with coupled
/// streams, and the decoupled negative control.
pub fn lifted_equivalence() -> CheckResult {
    let fed = make_federated_quadratics(1, 4, 3, 12, 0.5, 1.0, 0.3).map_err(err_str)?;
    let mut worst: f64 = 0.0;
    for (variant, config) in variant_configs(7) {
        let report = equivalence_harness(&fed, variant, &config).map_err(err_str)?;
        if !report.pass || report.iterations != ITERS {
            return fail(format!(
                "local {} diverges from the lifted run: gap {:.3e} over {} iterations, counts match {}",
                variant.name(),
                report.max_iterate_gap,
                report.iterations,
                report.counts_match
            ));
        }
        worst = worst.max(report.max_iterate_gap / (1.0 + report.max_norm));
        let control = equivalence_harness_with(&fed, variant, &config, true).map_err(err_str)?;
        if control.pass {
            return fail(format!("negative control passed for {}", variant.name()));
        }
    }
    Ok(format!("n=4, {ITERS} iterations, worst relative gap {worst:.1e}; decoupled controls fail"))
}
