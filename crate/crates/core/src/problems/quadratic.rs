use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LcpProblem, Objective, ObjectiveData};
use crate::error::{Error, Result};
use crate::projection::build_subspace;

#[derive(Clone, Debug)]
pub(crate) enum Linear {
    Shared(DVector<f64>),
    PerAtom(DMatrix<f64>),
}

/// Finite sum of rank-one quadratics
/// `F(x; i) = ½(aᵢᵀx)² + ½ρ‖x‖² + qᵢᵀx + c`.
#[derive(Clone, Debug)]
pub struct FiniteSumQuadratic {
    dim: usize,
    n: usize,
    directions: Vec<f64>,
    ridge: f64,
    linear: Vec<f64>,
    per_atom: bool,
    offset: f64,
    mu: f64,
    hess: DMatrix<f64>,
    mean_linear: DVector<f64>,
    smooth: f64,
}

impl FiniteSumQuadratic {
    /// `mu` defaults to the smallest eigenvalue of the Hessian.
    pub(crate) fn new(
        directions: DMatrix<f64>,
        ridge: f64,
        linear: Linear,
        offset: f64,
        mu: Option<f64>,
    ) -> Result<Self> {
        let (n, dim) = directions.shape();
        if n == 0 || dim == 0 {
            return Err(Error::InvalidArgument("quadratic needs at least one atom and one coordinate".into()));
        }
        let mut hess = directions.tr_mul(&directions) / n as f64;
        for i in 0..dim {
            hess[(i, i)] += ridge;
        }
        let (linear, per_atom, mean_linear) = match linear {
            Linear::Shared(q) => {
                crate::error::check_dim(dim, q.len())?;
                (q.as_slice().to_vec(), false, q)
            }
            Linear::PerAtom(q) => {
                crate::error::check_dim(dim, q.ncols())?;
                crate::error::check_dim(n, q.nrows())?;
                let mean = q.row_mean().transpose();
                let rows: Vec<f64> = q.transpose().as_slice().to_vec();
                (rows, true, mean)
            }
        };
        let smooth = directions.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max) + ridge;
        let mu = match mu {
            Some(m) => m,
            None => SymmetricEigen::new(hess.clone()).eigenvalues.min().max(0.0),
        };
        Ok(Self {
            dim,
            n,
            directions: directions.transpose().as_slice().to_vec(),
            ridge,
            linear,
            per_atom,
            offset,
            mu,
            hess,
            mean_linear,
            smooth,
        })
    }

    /// `F(x; i) = xᵀ(s²cᵢcᵢᵀ + λI)x + gᵀx`, so that `C = (s²/N)Σcᵢcᵢᵀ + λI`.
    pub fn from_atoms(c: &DMatrix<f64>, lambda: f64, g: &DVector<f64>, scale: f64) -> Result<Self> {
        let dirs = c * (std::f64::consts::SQRT_2 * scale);
        Self::new(dirs, 2.0 * lambda, Linear::Shared(g.clone()), 0.0, None)
    }

    /// Single-atom `½‖x − center‖²`.
    pub fn isotropic(center: &DVector<f64>) -> Result<Self> {
        let d = center.len();
        Self::new(DMatrix::zeros(1, d), 1.0, Linear::Shared(-center), 0.5 * center.norm_squared(), Some(1.0))
    }

    /// `F(x; i) = ½(aᵢᵀx)² + ½ρ‖x‖² + qᵢᵀx` with one linear term per atom.
    pub fn with_atom_terms(directions: DMatrix<f64>, ridge: f64, linear: DMatrix<f64>) -> Result<Self> {
        Self::new(directions, ridge, Linear::PerAtom(linear), 0.0, None)
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    /// Hessian `H = (1/N)Σaᵢaᵢᵀ + ρI`; equals `2C` for generated LCQPs.
    pub fn hessian_matrix(&self) -> &DMatrix<f64> {
        &self.hess
    }

    fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.dim..(i + 1) * self.dim]
    }
}

impl Objective for FiniteSumQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn atom_shape(&self) -> Vec<usize> {
        vec![self.n]
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.hess * &x)) + self.mean_linear.dot(&x) + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.hess * DVector::from_column_slice(x) + &self.mean_linear;
        out.copy_from_slice(g.as_slice());
    }

    fn add_atom_gradient(&self, x: &[f64], atom: &[usize], out: &mut [f64]) {
        let i = atom[0];
        let a = self.direction(i);
        let ax: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
        let q = if self.per_atom { &self.linear[i * self.dim..(i + 1) * self.dim] } else { &self.linear[..] };
        for j in 0..self.dim {
            out[j] += a[j] * ax + self.ridge * x[j] + q[j];
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smooth)
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.hess.clone())
    }

    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((self.hess.clone(), self.mean_linear.clone()))
    }

    fn export(&self) -> Option<ObjectiveData> {
        Some(ObjectiveData::Quadratic {
            dim: self.dim,
            directions: self.directions.clone(),
            ridge: self.ridge,
            linear: self.linear.clone(),
            linear_per_atom: self.per_atom,
            offset: self.offset,
            mu: self.mu,
        })
    }
}

/// Random linearly constrained quadratic `xᵀCx + gᵀx` s.t. `Aᵀx = 0`.
///
/// Atoms are scaled so that every atom Hessian has norm at most
/// `2·eigen_ceil` while `C ⪰ eigen_floor·I`. The per-atom smoothness is
/// therefore `2·eigen_ceil` and the strong convexity `2·eigen_floor`.
pub fn make_lcqp(
    seed: u64,
    p: usize,
    n_atoms: usize,
    m_constraints: usize,
    eigen_floor: f64,
    eigen_ceil: f64,
) -> Result<LcpProblem> {
    if !(eigen_floor > 0.0) || !(eigen_ceil >= eigen_floor) || !eigen_ceil.is_finite() {
        return Err(Error::BadSpectrum { floor: eigen_floor, ceil: eigen_ceil });
    }
    if n_atoms < p {
        return Err(Error::InvalidArgument(format!("need N >= p, got N = {n_atoms}, p = {p}")));
    }
    if m_constraints == 0 || m_constraints >= p {
        return Err(Error::InvalidArgument(format!("need 1 <= m_constraints < p, got {m_constraints} with p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let c = normal(n_atoms, p);
    let g: DVector<f64> = normal(p, 1).column(0).into_owned();
    let a = normal(p, m_constraints);
    let max_sq = c.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    let scale = if max_sq > 0.0 { ((eigen_ceil - eigen_floor) / max_sq).sqrt() } else { 0.0 };
    let mut q = FiniteSumQuadratic::from_atoms(&c, eigen_floor, &g, scale)?;
    q.mu = 2.0 * eigen_floor;
    q.smooth = 2.0 * eigen_ceil;
    let subspace = build_subspace(&a, &DVector::zeros(m_constraints))?;
    LcpProblem::new(Arc::new(q), subspace)
}
