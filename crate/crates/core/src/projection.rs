//! Orthogonal projections onto the range of a constraint matrix `A` and onto
//! its orthogonal complement, the feasible directions of `Aᵀx = b`.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    Explicit,
    /// `n` stacked blocks of length `d` constrained to be equal.
    Consensus {
        workers: usize,
        dim: usize,
    },
}

/// A factorized constraint `Aᵀx = b` with an orthonormal basis of `R(A)` and
/// the least-norm feasible point.
#[derive(Clone, Debug)]
pub struct ConstraintSubspace {
    kind: SubspaceKind,
    dim: usize,
    a: Option<DMatrix<f64>>,
    b: DVector<f64>,
    rank: usize,
    basis: Option<DMatrix<f64>>,
    shift: DVector<f64>,
}

/// Builds the factorized subspace for `Aᵀx = b`.
pub fn build_subspace(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<ConstraintSubspace> {
    ConstraintSubspace::new(a, b)
}

/// Consensus projection: replaces every block of `x` by the block average.
pub fn consensus_project(x: &DVector<f64>, n: usize, d: usize) -> Result<DVector<f64>> {
    check_dim(n * d, x.len())?;
    let mut out = x.clone();
    consensus_in_place(out.as_mut_slice(), n, d);
    Ok(out)
}

/// Compensated left-to-right mean. Shared by every code path that averages
/// worker blocks so they round identically.
pub fn kahan_mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum / n as f64
}

fn consensus_in_place(x: &mut [f64], n: usize, d: usize) {
    for j in 0..d {
        let mean = kahan_mean((0..n).map(|k| x[k * d + j]), n);
        for k in 0..n {
            x[k * d + j] = mean;
        }
    }
}

/// The consensus constraint matrix `Bᵀ ⊗ I_d` of size `nd × d(n-1)`, where
/// `B` takes differences of consecutive workers. Column `(k, j)` has `+1` at
/// coordinate `j` of block `k` and `-1` at coordinate `j` of block `k+1`.
pub fn consensus_constraint_matrix(n: usize, d: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n * d, d * n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        for j in 0..d {
            a[(k * d + j, k * d + j)] = 1.0;
            a[((k + 1) * d + j, k * d + j)] = -1.0;
        }
    }
    a
}

/// Modified Gram-Schmidt with column pivoting and one reorthogonalization
/// pass. Returns the orthonormal columns and the pivot order.
fn orthonormalize(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let (p, m) = a.shape();
    let mut work: Vec<DVector<f64>> = (0..m).map(|j| a.column(j).into_owned()).collect();
    let scale = work.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut used = vec![false; m];
    while scale > 0.0 && q.len() < p.min(m) {
        let (j, norm) = (0..m)
            .filter(|&j| !used[j])
            .map(|j| (j, work[j].norm()))
            .fold((usize::MAX, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if norm <= RANK_TOL * scale {
            break;
        }
        let mut v = &work[j] / norm;
        for _ in 0..2 {
            for qi in &q {
                let c = qi.dot(&v);
                v.axpy(-c, qi, 1.0);
            }
            let nv = v.norm();
            v /= nv;
        }
        used[j] = true;
        for k in 0..m {
            if !used[k] {
                let c = v.dot(&work[k]);
                work[k].axpy(-c, &v, 1.0);
            }
        }
        q.push(v);
        pivots.push(j);
    }
    let basis = if q.is_empty() { DMatrix::zeros(p, 0) } else { DMatrix::from_columns(&q) };
    (basis, pivots)
}

/// Solves `Aᵀ(Qc) = b` on the pivot rows, where `R = QᵀA` is triangular in
/// pivot order.
fn solve_pivot_rows(r: &DMatrix<f64>, pivots: &[usize], rhs: &DVector<f64>) -> DVector<f64> {
    let mut c = DVector::zeros(pivots.len());
    for (k, &pk) in pivots.iter().enumerate() {
        let mut s = rhs[pk];
        for i in 0..k {
            s -= r[(i, pk)] * c[i];
        }
        c[k] = s / r[(k, pk)];
    }
    c
}

impl ConstraintSubspace {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let (p, m) = a.shape();
        if p == 0 {
            return Err(Error::InvalidArgument("constraint matrix has no rows".into()));
        }
        check_dim(m, b.len())?;
        let (basis, pivots) = orthonormalize(a);
        let rank = pivots.len();
        let mut shift = DVector::zeros(p);
        if rank > 0 && b.iter().any(|&v| v != 0.0) {
            let r = basis.tr_mul(a);
            shift = &basis * solve_pivot_rows(&r, &pivots, b);
            let residual = b - a.tr_mul(&shift);
            shift += &basis * solve_pivot_rows(&r, &pivots, &residual);
        }
        let residual = (a.tr_mul(&shift) - b).norm();
        if residual > 1e-8 * (1.0 + b.norm()) {
            return Err(Error::InfeasibleConstraint { residual });
        }
        if rank == p {
            return Err(Error::DegenerateConstraint { rank, point: shift.as_slice().to_vec() });
        }
        Ok(Self {
            kind: SubspaceKind::Explicit,
            dim: p,
            a: Some(a.clone()),
            b: b.clone(),
            rank,
            basis: Some(basis),
            shift,
        })
    }

    /// No constraint at all: both projectors are trivial.
    pub fn unconstrained(p: usize) -> Self {
        Self {
            kind: SubspaceKind::Explicit,
            dim: p,
            a: Some(DMatrix::zeros(p, 0)),
            b: DVector::zeros(0),
            rank: 0,
            basis: Some(DMatrix::zeros(p, 0)),
            shift: DVector::zeros(p),
        }
    }

    /// Equal-blocks constraint over `n` workers of dimension `d`, applied by
    /// block averaging without forming `A`.
    pub fn consensus(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument("consensus needs n >= 1 and d >= 1".into()));
        }
        Ok(Self {
            kind: SubspaceKind::Consensus { workers: n, dim: d },
            dim: n * d,
            a: None,
            b: DVector::zeros(d * (n - 1)),
            rank: d * (n - 1),
            basis: None,
            shift: DVector::zeros(n * d),
        })
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn feasible_shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn has_shift(&self) -> bool {
        self.shift.iter().any(|&v| v != 0.0)
    }

    /// The constraint matrix. Materialized on demand for the consensus kind.
    pub fn a_matrix(&self) -> Cow<'_, DMatrix<f64>> {
        match (&self.a, self.kind) {
            (Some(a), _) => Cow::Borrowed(a),
            (None, SubspaceKind::Consensus { workers, dim }) => Cow::Owned(consensus_constraint_matrix(workers, dim)),
            (None, SubspaceKind::Explicit) => unreachable!("explicit subspaces store A"),
        }
    }

    /// Orthonormal basis of `R(A)`, `p × rank`. Materialized on demand for the
    /// consensus kind.
    pub fn ortho_basis(&self) -> Cow<'_, DMatrix<f64>> {
        match &self.basis {
            Some(q) => Cow::Borrowed(q),
            None => Cow::Owned(orthonormalize(&self.a_matrix()).0),
        }
    }

    pub fn project_range(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = x.clone();
        self.project_range_mut(out.as_mut_slice());
        Ok(out)
    }

    pub fn project_null(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        let mut out = x.clone();
        self.project_null_mut(out.as_mut_slice());
        Ok(out)
    }

    /// In-place `P_A`. Panics if `x.len() != dim`.
    pub fn project_range_mut(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        match (&self.basis, self.kind) {
            (Some(q), _) => {
                let c = q.tr_mul(&DVector::from_column_slice(x));
                let v = q * c;
                x.copy_from_slice(v.as_slice());
            }
            (None, SubspaceKind::Consensus { workers, dim }) => {
                let mut avg = x.to_vec();
                consensus_in_place(&mut avg, workers, dim);
                for (xi, ai) in x.iter_mut().zip(&avg) {
                    *xi -= ai;
                }
            }
            (None, SubspaceKind::Explicit) => unreachable!(),
        }
    }

    /// In-place `P_{A⊥}`. Panics if `x.len() != dim`.
    pub fn project_null_mut(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        match (&self.basis, self.kind) {
            (Some(q), _) => {
                if q.ncols() == 0 {
                    return;
                }
                let mut v = DVector::from_column_slice(x);
                let c = q.tr_mul(&v);
                v.gemv(-1.0, q, &c, 1.0);
                x.copy_from_slice(v.as_slice());
            }
            (None, SubspaceKind::Consensus { workers, dim }) => consensus_in_place(x, workers, dim),
            (None, SubspaceKind::Explicit) => unreachable!(),
        }
    }

    /// `‖Aᵀx − b‖₂`.
    pub fn feasibility_residual(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.residual_of(x.as_slice()))
    }

    pub(crate) fn residual_of(&self, x: &[f64]) -> f64 {
        match (&self.a, self.kind) {
            (Some(a), _) => {
                if a.ncols() == 0 {
                    return 0.0;
                }
                (a.tr_mul(&DVector::from_column_slice(x)) - &self.b).norm()
            }
            (None, SubspaceKind::Consensus { workers, dim }) => {
                let mut s = 0.0;
                for k in 0..workers - 1 {
                    for j in 0..dim {
                        let diff = x[k * dim + j] - x[(k + 1) * dim + j];
                        s += diff * diff;
                    }
                }
                s.sqrt()
            }
            (None, SubspaceKind::Explicit) => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn axis_aligned_examples() {
        let s = build_subspace(&DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), &DVector::zeros(1)).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(s.ortho_basis().as_slice(), &[1.0, 0.0]);
        assert_eq!(s.feasible_shift().as_slice(), &[0.0, 0.0]);
        let x = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(s.project_range(&x).unwrap().as_slice(), &[3.0, 0.0]);
        assert_eq!(s.project_null(&x).unwrap().as_slice(), &[0.0, 4.0]);
        assert_eq!(s.project_range(&DVector::zeros(2)).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn least_norm_shift() {
        let a = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let s = build_subspace(&a, &DVector::from_vec(vec![4.0])).unwrap();
        assert!(close(s.feasible_shift()[0], 2.0, 1e-14));
        assert!(close(s.feasible_shift()[1], 0.0, 1e-14));
        assert_eq!(s.ortho_basis().as_slice(), &[1.0, 0.0]);
        assert!(s.feasibility_residual(s.feasible_shift()).unwrap() <= 1e-10 * 5.0);
    }

    #[test]
    fn full_rank_is_degenerate() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        match build_subspace(&a, &DVector::from_vec(vec![1.0, 4.0])) {
            Err(Error::DegenerateConstraint { rank: 2, point }) => {
                assert!(close(point[0], 1.0, 1e-12) && close(point[1], 2.0, 1e-12));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let err = build_subspace(&a, &DVector::from_vec(vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::InfeasibleConstraint { .. }));
    }

    #[test]
    fn dimension_checks() {
        let s = ConstraintSubspace::consensus(2, 2).unwrap();
        assert!(matches!(s.project_null(&DVector::zeros(3)), Err(Error::DimensionMismatch { expected: 4, got: 3 })));
        assert!(consensus_project(&DVector::zeros(5), 2, 2).is_err());
    }

    #[test]
    fn consensus_examples() {
        let x = DVector::from_vec(vec![1.0, 3.0]);
        assert_eq!(consensus_project(&x, 2, 1).unwrap().as_slice(), &[2.0, 2.0]);
        let same = DVector::from_vec(vec![0.5, -1.25, 0.5, -1.25, 0.5, -1.25]);
        assert_eq!(consensus_project(&same, 3, 2).unwrap(), same);
    }
}
