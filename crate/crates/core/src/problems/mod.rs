//! Linearly constrained finite-sum problems, generators and reference tools.

mod analysis;
mod federated;
mod generator;
mod logistic;
mod network;
mod quadratic;
mod reference;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::projection::ConstraintSubspace;

pub use analysis::{curvature_bound, empirical_smoothness, estimate_smoothness, power_iteration, variance_at_optimum};
pub use federated::{
    federated_heterogeneity, lift_consensus, make_federated_logreg, make_federated_quadratics, FederatedInstance,
    LiftedObjective,
};
pub use generator::{GeneratorSpec, Instance};
pub use logistic::{make_constrained_logreg, Logistic};
pub use network::{make_network_flow, make_network_flow_with, EdgeCost, EdgeFlow, QuadraticEdge};
pub use quadratic::{make_lcqp, FiniteSumQuadratic};
pub use reference::{solve_reference, solve_reference_with, ReferenceOptions, ReferenceSolution};

/// A finite-sum objective `F(x) = mean over atoms of F(x; atom)`.
///
/// Atoms are tuples with one index per sampling factor. Plain finite sums
/// have a single factor; a lifted consensus objective has one per worker.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Number of atoms in each sampling factor.
    fn atom_shape(&self) -> Vec<usize>;

    /// RNG stream key of each sampling factor.
    fn stream_keys(&self) -> Vec<u64> {
        vec![0; self.atom_shape().len()]
    }

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇F(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Adds `∇F(x; atom)` into `out`.
    fn add_atom_gradient(&self, x: &[f64], atom: &[usize], out: &mut [f64]);

    /// Per-atom gradient Lipschitz constant, when known in closed form.
    fn smoothness(&self) -> Option<f64>;

    fn strong_convexity(&self) -> f64;

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// `(H, c)` with `F(x) = ½xᵀHx + cᵀx + const`, for quadratic objectives.
    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }

    /// Gradient evaluations charged for one full gradient.
    fn full_cost(&self) -> u64 {
        self.atom_shape().iter().map(|&n| n as u64).product()
    }

    /// Gradient evaluations charged for one atom gradient.
    fn atom_cost(&self) -> u64 {
        1
    }

    /// Raw data for serialization, when the objective supports it.
    fn export(&self) -> Option<ObjectiveData> {
        None
    }
}

/// Serializable description of the built-in objectives.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveData {
    Quadratic {
        dim: usize,
        directions: Vec<f64>,
        ridge: f64,
        linear: Vec<f64>,
        linear_per_atom: bool,
        offset: f64,
        mu: f64,
    },
    Logistic {
        features: Vec<f64>,
        columns: usize,
        labels: Vec<usize>,
        classes: usize,
        weight_decay: f64,
    },
    EdgeQuadratic {
        weights: Vec<f64>,
    },
    Lifted {
        locals: Vec<ObjectiveData>,
        keys: Vec<u64>,
    },
}

impl ObjectiveData {
    pub fn build(&self) -> Result<Arc<dyn Objective>> {
        Ok(match self {
            ObjectiveData::Quadratic { dim, directions, ridge, linear, linear_per_atom, offset, mu } => {
                let n = directions.len() / dim.max(&1);
                let dirs = DMatrix::from_row_slice(n, *dim, directions);
                let lin = if *linear_per_atom {
                    quadratic::Linear::PerAtom(DMatrix::from_row_slice(n, *dim, linear))
                } else {
                    quadratic::Linear::Shared(DVector::from_column_slice(linear))
                };
                Arc::new(FiniteSumQuadratic::new(dirs, *ridge, lin, *offset, Some(*mu))?)
            }
            ObjectiveData::Logistic { features, columns, labels, classes, weight_decay } => {
                let n = labels.len();
                let f = DMatrix::from_row_slice(n, *columns, features);
                Arc::new(Logistic::new(&f, labels.clone(), *classes, *weight_decay)?)
            }
            ObjectiveData::EdgeQuadratic { weights } => Arc::new(EdgeFlow::quadratic(weights)?),
            ObjectiveData::Lifted { locals, keys } => {
                let locals = locals.iter().map(|l| l.build()).collect::<Result<Vec<_>>>()?;
                Arc::new(LiftedObjective::new(locals, keys.clone())?)
            }
        })
    }
}

/// A finite-sum objective together with its linear constraint.
#[derive(Clone, Debug)]
pub struct LcpProblem {
    objective: Arc<dyn Objective>,
    subspace: Arc<ConstraintSubspace>,
    smoothness: f64,
    strong_convexity: f64,
}

impl LcpProblem {
    /// Uses the objective's closed-form constants, falling back to an
    /// empirical smoothness estimate.
    pub fn new(objective: Arc<dyn Objective>, subspace: ConstraintSubspace) -> Result<Self> {
        check_dim(objective.dim(), subspace.dim())?;
        let smoothness = match objective.smoothness() {
            Some(l) => l,
            None => 1.5 * empirical_smoothness(objective.as_ref(), 0, 1000),
        };
        if !(smoothness > 0.0) {
            return Err(Error::InvalidArgument(format!("smoothness must be positive, got {smoothness}")));
        }
        let strong_convexity = objective.strong_convexity();
        Ok(Self { objective, subspace: Arc::new(subspace), smoothness, strong_convexity })
    }

    /// Overrides the constants reported to the solvers.
    pub fn with_constants(mut self, smoothness: f64, strong_convexity: f64) -> Self {
        self.smoothness = smoothness;
        self.strong_convexity = strong_convexity;
        self
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    pub fn subspace(&self) -> &ConstraintSubspace {
        &self.subspace
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Total number of atom tuples.
    pub fn n_atoms(&self) -> u64 {
        self.objective.atom_shape().iter().map(|&n| n as u64).product()
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x.as_slice())
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.objective.gradient(x.as_slice(), g.as_mut_slice());
        g
    }

    /// Gradient of one atom tuple.
    pub fn atom_gradient(&self, x: &DVector<f64>, atom: &[usize]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.objective.add_atom_gradient(x.as_slice(), atom, g.as_mut_slice());
        g
    }

    /// Decodes a flat atom index into a tuple, first factor varying slowest.
    pub fn atom_tuple(&self, mut flat: u64) -> Vec<usize> {
        let shape = self.objective.atom_shape();
        let mut tuple = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            tuple[k] = (flat % shape[k] as u64) as usize;
            flat /= shape[k] as u64;
        }
        tuple
    }

    pub fn feasibility_residual(&self, x: &DVector<f64>) -> f64 {
        self.subspace.residual_of(x.as_slice())
    }

    /// `‖P_{A⊥} ∇F(x)‖`.
    pub fn stationarity(&self, x: &DVector<f64>) -> f64 {
        let mut g = self.gradient(x);
        self.subspace.project_null_mut(g.as_mut_slice());
        g.norm()
    }
}
