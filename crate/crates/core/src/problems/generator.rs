use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{
    lift_consensus, make_constrained_logreg, make_federated_logreg, make_federated_quadratics, make_lcqp,
    make_network_flow, FederatedInstance, LcpProblem,
};
use crate::error::Result;

/// Named problem generator with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Lcqp {
        seed: u64,
        p: usize,
        n_atoms: usize,
        constraints: usize,
        eigen_floor: f64,
        eigen_ceil: f64,
    },
    Logreg {
        seed: u64,
        n_atoms: usize,
        features: usize,
        classes: usize,
        constraints: usize,
        weight_decay: f64,
    },
    NetworkFlow {
        edges: Vec<(usize, usize)>,
        rates: Vec<f64>,
        weights: Vec<f64>,
    },
    FederatedQuadratic {
        seed: u64,
        workers: usize,
        dim: usize,
        atoms_per_worker: usize,
        ridge: f64,
        heterogeneity: f64,
        noise: f64,
    },
    FederatedLogreg {
        seed: u64,
        workers: usize,
        atoms_per_worker: usize,
        features: usize,
        weight_decay: f64,
        heterogeneity: f64,
    },
}

/// A generated problem. Federated instances keep their worker structure.
#[derive(Clone, Debug)]
pub enum Instance {
    Single(LcpProblem),
    Federated(FederatedInstance),
}

impl Instance {
    /// The constrained problem; federated instances are lifted.
    pub fn problem(&self) -> Result<LcpProblem> {
        match self {
            Instance::Single(p) => Ok(p.clone()),
            Instance::Federated(f) => lift_consensus(f),
        }
    }

    pub fn federated(&self) -> Option<&FederatedInstance> {
        match self {
            Instance::Federated(f) => Some(f),
            Instance::Single(_) => None,
        }
    }
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Lcqp { .. } => "lcqp",
            GeneratorSpec::Logreg { .. } => "logreg",
            GeneratorSpec::NetworkFlow { .. } => "network_flow",
            GeneratorSpec::FederatedQuadratic { .. } => "federated_quadratic",
            GeneratorSpec::FederatedLogreg { .. } => "federated_logreg",
        }
    }

    pub fn build(&self) -> Result<Instance> {
        Ok(match self {
            GeneratorSpec::Lcqp { seed, p, n_atoms, constraints, eigen_floor, eigen_ceil } => {
                Instance::Single(make_lcqp(*seed, *p, *n_atoms, *constraints, *eigen_floor, *eigen_ceil)?)
            }
            GeneratorSpec::Logreg { seed, n_atoms, features, classes, constraints, weight_decay } => Instance::Single(
                make_constrained_logreg(*seed, *n_atoms, *features, *classes, *constraints, *weight_decay)?,
            ),
            GeneratorSpec::NetworkFlow { edges, rates, weights } => {
                Instance::Single(make_network_flow(edges, &DVector::from_column_slice(rates), weights)?)
            }
            GeneratorSpec::FederatedQuadratic { seed, workers, dim, atoms_per_worker, ridge, heterogeneity, noise } => {
                Instance::Federated(make_federated_quadratics(
                    *seed,
                    *workers,
                    *dim,
                    *atoms_per_worker,
                    *ridge,
                    *heterogeneity,
                    *noise,
                )?)
            }
            GeneratorSpec::FederatedLogreg {
                seed,
                workers,
                atoms_per_worker,
                features,
                weight_decay,
                heterogeneity,
            } => Instance::Federated(make_federated_logreg(
                *seed,
                *workers,
                *atoms_per_worker,
                *features,
                *weight_decay,
                *heterogeneity,
            )?),
        })
    }
}
