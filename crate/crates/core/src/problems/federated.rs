use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logistic::planted_samples;
use super::quadratic::{FiniteSumQuadratic, Linear};
use super::{solve_reference_with, LcpProblem, Logistic, Objective, ObjectiveData, ReferenceOptions};
use crate::error::{check_dim, Error, Result};
use crate::projection::ConstraintSubspace;

/// `n` workers, each holding a finite-sum objective over `d` parameters.
#[derive(Clone, Debug)]
pub struct FederatedInstance {
    locals: Vec<Arc<dyn Objective>>,
    keys: Vec<u64>,
    dim: usize,
}

impl FederatedInstance {
    /// Worker `k` gets partition key `k`.
    pub fn new(locals: Vec<Arc<dyn Objective>>) -> Result<Self> {
        let keys = (0..locals.len() as u64).collect();
        Self::with_keys(locals, keys)
    }

    /// `keys[k]` identifies the data partition of worker `k` and selects its
    /// RNG stream.
    pub fn with_keys(locals: Vec<Arc<dyn Objective>>, keys: Vec<u64>) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidArgument("need at least one worker".into()));
        }
        check_dim(locals.len(), keys.len())?;
        let dims: Vec<usize> = locals.iter().map(|l| l.dim()).collect();
        if dims.iter().any(|&d| d != dims[0]) {
            return Err(Error::MismatchedDims(dims));
        }
        if locals.iter().any(|l| l.atom_shape().len() != 1) {
            return Err(Error::InvalidArgument("local objectives must be plain finite sums".into()));
        }
        Ok(Self { dim: dims[0], locals, keys })
    }

    pub fn n_workers(&self) -> usize {
        self.locals.len()
    }

    pub fn local_dim(&self) -> usize {
        self.dim
    }

    pub fn locals(&self) -> &[Arc<dyn Objective>] {
        &self.locals
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    /// `max_k L_k`.
    pub fn smoothness(&self) -> Option<f64> {
        self.locals.iter().map(|l| l.smoothness()).try_fold(0.0, |acc, l| l.map(|l| f64::max(acc, l)))
    }

    /// `min_k μ_k`.
    pub fn strong_convexity(&self) -> f64 {
        self.locals.iter().map(|l| l.strong_convexity()).fold(f64::INFINITY, f64::min)
    }

    /// Workers reordered so that new worker `i` is old worker `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            locals: perm.iter().map(|&k| self.locals[k].clone()).collect(),
            keys: perm.iter().map(|&k| self.keys[k]).collect(),
            dim: self.dim,
        }
    }

    /// Minimizer of the average `(1/n)Σ f_k`.
    pub fn global_minimizer(&self, tol: f64) -> Result<DVector<f64>> {
        let lifted = lift_consensus(self)?;
        let sol = solve_reference_with(&lifted, &ReferenceOptions { tol, ..Default::default() })?;
        Ok(sol.x.rows(0, self.dim).into_owned())
    }

    /// `(σ*², ζ*²)` at the global minimizer.
    pub fn heterogeneity(&self) -> Result<(f64, f64)> {
        let x = self.global_minimizer(1e-12)?;
        federated_heterogeneity(self, &x)
    }
}

/// Lifted consensus objective `F(x) = Σ_k f_k(x⁽ᵏ⁾)` over `n·d` parameters.
/// An atom is one index per worker.
#[derive(Clone, Debug)]
pub struct LiftedObjective {
    locals: Vec<Arc<dyn Objective>>,
    keys: Vec<u64>,
    dim: usize,
}

impl LiftedObjective {
    pub fn new(locals: Vec<Arc<dyn Objective>>, keys: Vec<u64>) -> Result<Self> {
        let fed = FederatedInstance::with_keys(locals, keys)?;
        Ok(Self { dim: fed.dim, locals: fed.locals, keys: fed.keys })
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, &Arc<dyn Objective>)> {
        self.locals.iter().enumerate()
    }

    fn block_diag(&self, parts: Vec<DMatrix<f64>>) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::zeros(d * parts.len(), d * parts.len());
        for (k, part) in parts.iter().enumerate() {
            h.view_mut((k * d, k * d), (d, d)).copy_from(part);
        }
        h
    }
}

impl Objective for LiftedObjective {
    fn dim(&self) -> usize {
        self.dim * self.locals.len()
    }

    fn atom_shape(&self) -> Vec<usize> {
        self.locals.iter().map(|l| l.atom_shape()[0]).collect()
    }

    fn stream_keys(&self) -> Vec<u64> {
        self.keys.clone()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        self.blocks().map(|(k, l)| l.value(&x[k * d..(k + 1) * d])).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, l) in self.blocks() {
            l.gradient(&x[k * d..(k + 1) * d], &mut out[k * d..(k + 1) * d]);
        }
    }

    fn add_atom_gradient(&self, x: &[f64], atom: &[usize], out: &mut [f64]) {
        let d = self.dim;
        for (k, l) in self.blocks() {
            l.add_atom_gradient(&x[k * d..(k + 1) * d], &atom[k..k + 1], &mut out[k * d..(k + 1) * d]);
        }
    }

    fn smoothness(&self) -> Option<f64> {
        self.locals.iter().map(|l| l.smoothness()).try_fold(0.0, |acc, l| l.map(|l| f64::max(acc, l)))
    }

    fn strong_convexity(&self) -> f64 {
        self.locals.iter().map(|l| l.strong_convexity()).fold(f64::INFINITY, f64::min)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let d = self.dim;
        let parts: Option<Vec<_>> = self.blocks().map(|(k, l)| l.hessian(&x[k * d..(k + 1) * d])).collect();
        parts.map(|p| self.block_diag(p))
    }

    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let parts: Option<Vec<_>> = self.locals.iter().map(|l| l.quadratic_form()).collect();
        let parts = parts?;
        let c = DVector::from_iterator(self.dim(), parts.iter().flat_map(|(_, c)| c.iter().cloned()));
        Some((self.block_diag(parts.into_iter().map(|(h, _)| h).collect()), c))
    }

    fn full_cost(&self) -> u64 {
        self.locals.iter().map(|l| l.full_cost()).sum()
    }

    fn atom_cost(&self) -> u64 {
        self.locals.len() as u64
    }

    fn export(&self) -> Option<ObjectiveData> {
        let locals: Option<Vec<_>> = self.locals.iter().map(|l| l.export()).collect();
        Some(ObjectiveData::Lifted { locals: locals?, keys: self.keys.clone() })
    }
}

/// The `n·d`-dimensional consensus-constrained problem whose solutions are
/// the minimizers of the worker average.
pub fn lift_consensus(fed: &FederatedInstance) -> Result<LcpProblem> {
    let obj = LiftedObjective { locals: fed.locals.clone(), keys: fed.keys.clone(), dim: fed.dim };
    let subspace = ConstraintSubspace::consensus(fed.n_workers(), fed.dim)?;
    LcpProblem::new(Arc::new(obj), subspace)
}

/// Exact `(σ*², ζ*²)`: the mean within-worker gradient variance and the mean
/// squared local gradient norm at `x_star`.
pub fn federated_heterogeneity(fed: &FederatedInstance, x_star: &DVector<f64>) -> Result<(f64, f64)> {
    check_dim(fed.dim, x_star.len())?;
    let d = fed.dim;
    let x = x_star.as_slice();
    let (mut sigma, mut zeta) = (0.0, 0.0);
    for local in &fed.locals {
        let n = local.atom_shape()[0];
        let mut full = vec![0.0; d];
        local.gradient(x, &mut full);
        zeta += full.iter().map(|v| v * v).sum::<f64>();
        let mut var = 0.0;
        let mut g = vec![0.0; d];
        for i in 0..n {
            g.iter_mut().for_each(|v| *v = 0.0);
            local.add_atom_gradient(x, &[i], &mut g);
            var += g.iter().zip(&full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        sigma += var / n as f64;
    }
    let n = fed.n_workers() as f64;
    Ok((sigma / n, zeta / n))
}

/// Heterogeneous quadratic workers. Worker `k` has atoms
/// `½(aᵢᵀx)² + ½ρ‖x‖² − ρ cₖᵀx + noise·ξᵢᵀx` with a worker centre
/// `cₖ ~ heterogeneity·N(0, I)`.
pub fn make_federated_quadratics(
    seed: u64,
    workers: usize,
    dim: usize,
    atoms_per_worker: usize,
    ridge: f64,
    heterogeneity: f64,
    noise: f64,
) -> Result<FederatedInstance> {
    if workers == 0 || dim == 0 || atoms_per_worker == 0 {
        return Err(Error::InvalidArgument("need workers, dim and atoms_per_worker >= 1".into()));
    }
    if !(ridge > 0.0) {
        return Err(Error::InvalidArgument("ridge must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = 1.0 / (dim as f64).sqrt();
    let mut locals: Vec<Arc<dyn Objective>> = Vec::with_capacity(workers);
    for _ in 0..workers {
        let center: Vec<f64> = (0..dim).map(|_| heterogeneity * crate::rng::normal(&mut rng)).collect();
        let dirs = DMatrix::from_fn(atoms_per_worker, dim, |_, _| inv * crate::rng::normal(&mut rng));
        let lin =
            DMatrix::from_fn(atoms_per_worker, dim, |_, j| -ridge * center[j] + noise * crate::rng::normal(&mut rng));
        locals.push(Arc::new(FiniteSumQuadratic::new(dirs, ridge, Linear::PerAtom(lin), 0.0, None)?));
    }
    FederatedInstance::new(locals)
}

/// Binary logistic workers sharing a planted model perturbed per worker by
/// `heterogeneity`.
pub fn make_federated_logreg(
    seed: u64,
    workers: usize,
    atoms_per_worker: usize,
    d: usize,
    weight_decay: f64,
    heterogeneity: f64,
) -> Result<FederatedInstance> {
    if workers == 0 || atoms_per_worker == 0 || d == 0 {
        return Err(Error::InvalidArgument("need workers, atoms_per_worker and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = DMatrix::from_fn(1, d + 1, |_, _| 2.0 * crate::rng::normal(&mut rng));
    let mut locals: Vec<Arc<dyn Objective>> = Vec::with_capacity(workers);
    for _ in 0..workers {
        let w = DMatrix::from_fn(1, d + 1, |_, j| base[(0, j)] + heterogeneity * crate::rng::normal(&mut rng));
        let (features, labels) = planted_samples(&mut rng, atoms_per_worker, d, 2, Some(&w));
        locals.push(Arc::new(Logistic::new(&features, labels, 2, weight_decay)?));
    }
    FederatedInstance::new(locals)
}
