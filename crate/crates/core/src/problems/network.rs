use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{LcpProblem, Objective, ObjectiveData};
use crate::error::{check_dim, Error, Result};
use crate::projection::build_subspace;

/// Smooth convex cost of the flow on one edge.
pub trait EdgeCost: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
    fn second_derivative(&self, t: f64) -> f64;
    /// Lipschitz constant of the derivative.
    fn smoothness(&self) -> f64;
    fn strong_convexity(&self) -> f64;
    /// `w` when the cost is exactly `½wt²`.
    fn quadratic_weight(&self) -> Option<f64> {
        None
    }
}

/// `½wt²`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticEdge {
    pub weight: f64,
}

impl EdgeCost for QuadraticEdge {
    fn value(&self, t: f64) -> f64 {
        0.5 * self.weight * t * t
    }
    fn derivative(&self, t: f64) -> f64 {
        self.weight * t
    }
    fn second_derivative(&self, _t: f64) -> f64 {
        self.weight
    }
    fn smoothness(&self) -> f64 {
        self.weight
    }
    fn strong_convexity(&self) -> f64 {
        self.weight
    }
    fn quadratic_weight(&self) -> Option<f64> {
        Some(self.weight)
    }
}

/// Separable flow cost `Σₗ fₗ(xₗ)`. Atom `l` is `e·fₗ(xₗ)` so the mean over
/// the `e` atoms is the total cost.
#[derive(Debug)]
pub struct EdgeFlow {
    costs: Vec<Box<dyn EdgeCost>>,
}

impl EdgeFlow {
    pub fn new(costs: Vec<Box<dyn EdgeCost>>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidArgument("flow problem needs at least one edge".into()));
        }
        Ok(Self { costs })
    }

    pub fn quadratic(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("edge weights must be positive".into()));
        }
        Self::new(weights.iter().map(|&w| Box::new(QuadraticEdge { weight: w }) as Box<dyn EdgeCost>).collect())
    }
}

impl Objective for EdgeFlow {
    fn dim(&self) -> usize {
        self.costs.len()
    }

    fn atom_shape(&self) -> Vec<usize> {
        vec![self.costs.len()]
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, &t)| c.value(t)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), &t) in out.iter_mut().zip(&self.costs).zip(x) {
            *o = c.derivative(t);
        }
    }

    fn add_atom_gradient(&self, x: &[f64], atom: &[usize], out: &mut [f64]) {
        let l = atom[0];
        out[l] += self.costs.len() as f64 * self.costs[l].derivative(x[l]);
    }

    fn smoothness(&self) -> Option<f64> {
        let e = self.costs.len() as f64;
        Some(e * self.costs.iter().map(|c| c.smoothness()).fold(0.0, f64::max))
    }

    fn strong_convexity(&self) -> f64 {
        self.costs.iter().map(|c| c.strong_convexity()).fold(f64::INFINITY, f64::min)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let diag: Vec<f64> = self.costs.iter().zip(x).map(|(c, &t)| c.second_derivative(t)).collect();
        Some(DMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let w: Option<Vec<f64>> = self.costs.iter().map(|c| c.quadratic_weight()).collect();
        let w = w?;
        let e = w.len();
        Some((DMatrix::from_diagonal(&DVector::from_vec(w)), DVector::zeros(e)))
    }

    fn export(&self) -> Option<ObjectiveData> {
        let w: Option<Vec<f64>> = self.costs.iter().map(|c| c.quadratic_weight()).collect();
        w.map(|weights| ObjectiveData::EdgeQuadratic { weights })
    }
}

/// Edge-node incidence matrix: row `l` has `+1` at the tail and `-1` at the
/// head of edge `l`.
pub fn incidence_matrix(edges: &[(usize, usize)], nodes: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(edges.len(), nodes);
    for (l, &(i, j)) in edges.iter().enumerate() {
        a[(l, i)] = 1.0;
        a[(l, j)] = -1.0;
    }
    a
}

fn connected(edges: &[(usize, usize)], nodes: usize) -> bool {
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut components = nodes;
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            components -= 1;
        }
    }
    components == 1
}

/// Min-cost flow with weighted quadratic edge costs.
pub fn make_network_flow(edges: &[(usize, usize)], rates: &DVector<f64>, weights: &[f64]) -> Result<LcpProblem> {
    check_dim(edges.len(), weights.len())?;
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("edge weights must be positive".into()));
    }
    let costs = weights.iter().map(|&w| Box::new(QuadraticEdge { weight: w }) as Box<dyn EdgeCost>).collect();
    make_network_flow_with(edges, rates, costs)
}

/// Min-cost flow `min Σₗ fₗ(xₗ)` subject to flow conservation `Aᵀx = b`.
pub fn make_network_flow_with(
    edges: &[(usize, usize)],
    rates: &DVector<f64>,
    costs: Vec<Box<dyn EdgeCost>>,
) -> Result<LcpProblem> {
    let nodes = rates.len();
    check_dim(edges.len(), costs.len())?;
    if nodes < 2 || edges.is_empty() {
        return Err(Error::InvalidArgument("need at least two nodes and one edge".into()));
    }
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= nodes || j >= nodes || i == j) {
        return Err(Error::InvalidArgument(format!("invalid edge ({i}, {j})")));
    }
    let sum: f64 = rates.iter().sum();
    if sum.abs() > 1e-12 {
        return Err(Error::InfeasibleRates { sum });
    }
    if !connected(edges, nodes) {
        return Err(Error::DisconnectedGraph);
    }
    let subspace = build_subspace(&incidence_matrix(edges, nodes), rates)?;
    LcpProblem::new(Arc::new(EdgeFlow::new(costs)?), subspace)
}
