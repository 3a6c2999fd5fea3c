use nalgebra::{DMatrix, DVector};

use super::LcpProblem;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ReferenceOptions {
    /// Target for `‖P_{A⊥}∇F(x)‖` and the feasibility residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000 }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub iterations: usize,
}

/// Constrained minimizer to tolerance `tol`.
pub fn solve_reference(problem: &LcpProblem, tol: f64) -> Result<DVector<f64>> {
    solve_reference_with(problem, &ReferenceOptions { tol, ..Default::default() }).map(|s| s.x)
}

/// Solves the constrained problem to high accuracy.
///
/// Objectives with a Hessian use equality-constrained Newton steps (a single
/// KKT solve for quadratics, refined once). Others fall back to projected
/// gradient descent with step `1/L`.
pub fn solve_reference_with(problem: &LcpProblem, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    let sub = problem.subspace();
    let q = sub.ortho_basis().into_owned();
    let shift = sub.feasible_shift().clone();
    let obj = problem.objective();

    if obj.hessian(shift.as_slice()).is_some() {
        if let Some(sol) = newton(problem, &q, &shift, opts)? {
            return Ok(sol);
        }
    }
    projected_descent(problem, &shift, opts)
}

fn finish(problem: &LcpProblem, x: DVector<f64>, iterations: usize) -> ReferenceSolution {
    ReferenceSolution {
        value: problem.value(&x),
        stationarity: problem.stationarity(&x),
        feasibility: problem.feasibility_residual(&x),
        iterations,
        x,
    }
}

/// Solves `[H Q; Qᵀ 0][Δ; ν] = [top; bottom]` for `Δ`, with one step of
/// iterative refinement.
fn kkt_step(h: &DMatrix<f64>, q: &DMatrix<f64>, top: &DVector<f64>, bottom: &DVector<f64>) -> Option<DVector<f64>> {
    let (p, r) = (h.nrows(), q.ncols());
    let mut k = DMatrix::zeros(p + r, p + r);
    k.view_mut((0, 0), (p, p)).copy_from(h);
    k.view_mut((0, p), (p, r)).copy_from(q);
    k.view_mut((p, 0), (r, p)).copy_from(&q.transpose());
    let mut rhs = DVector::zeros(p + r);
    rhs.rows_mut(0, p).copy_from(top);
    rhs.rows_mut(p, r).copy_from(bottom);
    let lu = k.clone().lu();
    let mut sol = lu.solve(&rhs)?;
    let resid = &rhs - &k * &sol;
    sol += lu.solve(&resid)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.rows(0, p).into_owned())
    } else {
        None
    }
}

fn newton(
    problem: &LcpProblem,
    q: &DMatrix<f64>,
    shift: &DVector<f64>,
    opts: &ReferenceOptions,
) -> Result<Option<ReferenceSolution>> {
    let obj = problem.objective();
    let quadratic = obj.quadratic_form().is_some();
    let mut x = shift.clone();
    let max_newton = opts.max_iter.min(200);
    let mut last_stat = f64::INFINITY;
    for it in 0..max_newton {
        let g = problem.gradient(&x);
        let stat = problem.stationarity(&x);
        let feas = problem.feasibility_residual(&x);
        last_stat = stat;
        if stat <= opts.tol && feas <= opts.tol.max(1e-12) {
            return Ok(Some(finish(problem, x, it)));
        }
        let h = obj.hessian(x.as_slice()).expect("checked by caller");
        let bottom = q.tr_mul(&(shift - &x));
        let Some(step) = kkt_step(&h, q, &(-&g), &bottom) else {
            return Ok(None);
        };
        if quadratic {
            let candidate = &x + &step;
            if problem.stationarity(&candidate) >= stat && it > 0 {
                break;
            }
            x = candidate;
            continue;
        }
        let f0 = problem.value(&x);
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let candidate = &x + &step * t;
            if problem.value(&candidate) <= f0 + 0.25 * t * slope {
                x = candidate;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // Rounding-level progress only; accept a plain Newton step
                // if it still reduces stationarity.
                let candidate = &x + &step;
                if problem.stationarity(&candidate) < stat {
                    x = candidate;
                    break;
                }
                let sol = finish(problem, x, it);
                return Err(Error::NoConvergence { iterations: it, stationarity: sol.stationarity });
            }
        }
    }
    let sol = finish(problem, x, max_newton);
    if sol.stationarity <= opts.tol && sol.feasibility <= opts.tol.max(1e-12) {
        Ok(Some(sol))
    } else {
        Err(Error::NoConvergence { iterations: max_newton, stationarity: last_stat.min(sol.stationarity) })
    }
}

fn projected_descent(problem: &LcpProblem, shift: &DVector<f64>, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    let sub = problem.subspace();
    let eta = 1.0 / problem.smoothness();
    let mut z = DVector::zeros(problem.dim());
    let mut stat = f64::INFINITY;
    for it in 0..opts.max_iter {
        let x = &z + shift;
        let mut g = problem.gradient(&x);
        sub.project_null_mut(g.as_mut_slice());
        stat = g.norm();
        if stat <= opts.tol && problem.feasibility_residual(&x) <= opts.tol.max(1e-12) {
            return Ok(finish(problem, x, it));
        }
        z.axpy(-eta, &g, 1.0);
        sub.project_null_mut(z.as_mut_slice());
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, stationarity: stat })
}
