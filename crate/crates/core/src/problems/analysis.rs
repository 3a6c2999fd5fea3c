use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LcpProblem, Objective};
use crate::error::{check_dim, Error, Result};
use crate::{par, rng};

/// Largest eigenvalue of a symmetric positive semidefinite operator.
pub fn power_iteration<F>(matvec: F, dim: usize, seed: u64, rel_tol: f64, max_iter: usize) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut r = rng::stream(seed, 0);
    let mut v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut r));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = matvec(&v);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Spectral norm of the Hessian of a quadratic objective (`2λ_max(C)` for
/// `F = xᵀCx + gᵀx`).
pub fn curvature_bound(problem: &LcpProblem) -> Option<f64> {
    let (h, _) = problem.objective().quadratic_form()?;
    Some(power_iteration(|v| &h * v, h.nrows(), 1, 1e-12, 100_000))
}

/// Per-atom smoothness: the closed form when available, otherwise 1.5 times
/// the sampled estimate.
pub fn estimate_smoothness(problem: &LcpProblem) -> f64 {
    problem
        .objective()
        .smoothness()
        .unwrap_or_else(|| 1.5 * empirical_smoothness(problem.objective().as_ref(), 0, 1000))
}

/// Maximum of `‖∇F(x;ξ) − ∇F(y;ξ)‖ / ‖x − y‖` over random pairs and atoms.
pub fn empirical_smoothness(obj: &dyn Objective, seed: u64, pairs: usize) -> f64 {
    let dim = obj.dim();
    let shape = obj.atom_shape();
    let ratios = par::map(pairs, |k| {
        let mut r = rng::stream(seed, k as u64);
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let atom: Vec<usize> = shape.iter().map(|&n| r.random_range(0..n)).collect();
        let (mut gx, mut gy) = (vec![0.0; dim], vec![0.0; dim]);
        obj.add_atom_gradient(&x, &atom, &mut gx);
        obj.add_atom_gradient(&y, &atom, &mut gy);
        let num: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        (num / den).sqrt()
    });
    ratios.into_iter().fold(0.0, f64::max)
}

/// Largest atom count enumerated by [`variance_at_optimum`].
const MAX_ENUMERATED: u64 = 50_000_000;

/// Exact finite-sum second moments of the projected atom gradients at a
/// feasible point: `(mean ‖P_{A⊥}∇F(x;ξ)‖², mean ‖P_A∇F(x;ξ)‖²)`.
pub fn variance_at_optimum(problem: &LcpProblem, x_star: &DVector<f64>) -> Result<(f64, f64)> {
    check_dim(problem.dim(), x_star.len())?;
    let residual = problem.feasibility_residual(x_star);
    if residual > 1e-6 {
        return Err(Error::InfeasiblePoint { residual });
    }
    let total = problem.n_atoms();
    if total > MAX_ENUMERATED {
        return Err(Error::InvalidArgument(format!("{total} atoms is too many to enumerate")));
    }
    let dim = problem.dim();
    let obj = problem.objective();
    let sub = problem.subspace();
    let x = x_star.as_slice();
    let sums = par::chunked_sum(total as usize, 2, |range, acc| {
        let mut g = vec![0.0; dim];
        let mut p = vec![0.0; dim];
        for flat in range {
            let atom = problem.atom_tuple(flat as u64);
            g.iter_mut().for_each(|v| *v = 0.0);
            obj.add_atom_gradient(x, &atom, &mut g);
            p.copy_from_slice(&g);
            sub.project_null_mut(&mut p);
            acc[0] += p.iter().map(|v| v * v).sum::<f64>();
            acc[1] += g.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    });
    Ok((sums[0] / total as f64, sums[1] / total as f64))
}
