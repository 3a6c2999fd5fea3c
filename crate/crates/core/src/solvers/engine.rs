//! State and bookkeeping shared by the solvers.

use std::time::Instant;

use nalgebra::DVector;

use super::{IterateEvent, Observer, RunOptions, Sampling, SolverConfig};
use crate::error::{check_dim, Error, Result};
use crate::metrics::{ComplexityCounters, RunTrace, TraceRow};
use crate::problems::{LcpProblem, Objective};
use crate::projection::{ConstraintSubspace, SubspaceKind};
use crate::rng::AtomSampler;

/// `out ← mean over the batch of ∇F(x; atom)`; `atoms` holds `factors`
/// indices per batch element.
pub(crate) fn batch_gradient(obj: &dyn Objective, x: &[f64], atoms: &[usize], factors: usize, out: &mut [f64]) {
    out.fill(0.0);
    let batch = atoms.len() / factors;
    for tuple in atoms.chunks(factors) {
        obj.add_atom_gradient(x, tuple, out);
    }
    let inv = 1.0 / batch as f64;
    out.iter_mut().for_each(|v| *v *= inv);
}

/// `out ← ∇F(x; ξ) − ∇F(anchor; ξ) + h` averaged over the batch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn control_variate(
    obj: &dyn Objective,
    x: &[f64],
    anchor: &[f64],
    atoms: Option<&[usize]>,
    factors: usize,
    h: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    match atoms {
        Some(atoms) => {
            batch_gradient(obj, x, atoms, factors, out);
            batch_gradient(obj, anchor, atoms, factors, scratch);
        }
        None => {
            obj.gradient(x, out);
            obj.gradient(anchor, scratch);
        }
    }
    for ((o, s), hj) in out.iter_mut().zip(scratch.iter()).zip(h) {
        *o = *o - *s + *hj;
    }
}

/// Geometrically weighted running average with weight ratio `q`: after
/// folding `x_0..x_j`, equals `Σ q^{j−i} x_i / Σ q^{j−i}`.
pub(crate) struct WeightedAverage {
    q: f64,
    total: f64,
    pub value: Vec<f64>,
}

impl WeightedAverage {
    pub fn new(q: f64, dim: usize) -> Self {
        Self { q, total: 0.0, value: vec![0.0; dim] }
    }

    pub fn reset(&mut self) {
        self.total = 0.0;
        self.value.fill(0.0);
    }

    pub fn fold(&mut self, x: &[f64]) {
        self.total = 1.0 + self.q * self.total;
        let w = 1.0 / self.total;
        for (a, xi) in self.value.iter_mut().zip(x) {
            *a = (1.0 - w) * *a + w * xi;
        }
    }
}

/// Running arithmetic mean.
pub(crate) fn fold_mean(mean: &mut [f64], x: &[f64], count: usize) {
    let inv = 1.0 / count as f64;
    for (m, xi) in mean.iter_mut().zip(x) {
        *m += (xi - *m) * inv;
    }
}

pub(crate) struct Engine<'a, 'o> {
    pub problem: &'a LcpProblem,
    pub obj: &'a dyn Objective,
    pub sub: &'a ConstraintSubspace,
    shift: Option<Vec<f64>>,
    sampler: AtomSampler,
    atoms: Vec<usize>,
    factors: usize,
    batch: Option<usize>,
    pub counters: ComplexityCounters,
    point: Vec<f64>,
    anchor_point: Vec<f64>,
    pub scratch: Vec<f64>,
    reference: Option<f64>,
    pub trace: RunTrace,
    clock: Instant,
    record_every: u64,
    projection_events: u64,
    observer: Option<Observer<'o>>,
    consensus: bool,
    pub stage_suboptimality: Vec<f64>,
}

impl<'a, 'o> Engine<'a, 'o> {
    pub fn new(
        problem: &'a LcpProblem,
        config: &SolverConfig,
        opts: RunOptions<'o>,
        variant: &str,
    ) -> Result<(Self, Vec<f64>)> {
        let obj = problem.objective().as_ref();
        let sub = problem.subspace();
        let dim = problem.dim();
        let shift = sub.has_shift().then(|| sub.feasible_shift().as_slice().to_vec());
        let z0 = match &opts.x0 {
            Some(x0) => {
                check_dim(dim, x0.len())?;
                match &shift {
                    Some(s) => x0.iter().zip(s).map(|(a, b)| a - b).collect(),
                    None => x0.as_slice().to_vec(),
                }
            }
            None => vec![0.0; dim],
        };
        let shape = obj.atom_shape();
        let engine = Self {
            problem,
            obj,
            sub,
            shift,
            sampler: AtomSampler::new(config.seed, &obj.stream_keys(), &shape),
            atoms: Vec::new(),
            factors: shape.len(),
            batch: match config.sampling {
                Sampling::Full => None,
                Sampling::Batch(b) => Some(b),
            },
            counters: opts.start,
            point: vec![0.0; dim],
            anchor_point: vec![0.0; dim],
            scratch: vec![0.0; dim],
            reference: opts.reference_value,
            trace: RunTrace::new(opts.run_id.unwrap_or_else(|| variant.to_string()), variant),
            clock: Instant::now(),
            record_every: config.record_every as u64,
            projection_events: 0,
            observer: opts.observer,
            consensus: matches!(sub.kind(), SubspaceKind::Consensus { .. }),
            stage_suboptimality: Vec::new(),
        };
        Ok((engine, z0))
    }

    fn shifted<'b>(shift: &Option<Vec<f64>>, z: &'b [f64], buf: &'b mut [f64]) -> &'b [f64] {
        match shift {
            Some(s) => {
                for ((b, zi), si) in buf.iter_mut().zip(z).zip(s) {
                    *b = zi + si;
                }
                buf
            }
            None => z,
        }
    }

    /// Stochastic (or full) gradient at `z + shift`.
    pub fn gradient(&mut self, z: &[f64], out: &mut [f64]) {
        let x = Self::shifted(&self.shift, z, &mut self.point);
        match self.batch {
            Some(b) => {
                self.sampler.draw(b, &mut self.atoms);
                batch_gradient(self.obj, x, &self.atoms, self.factors, out);
                self.counters.gradients += b as u64 * self.obj.atom_cost();
            }
            None => {
                self.obj.gradient(x, out);
                self.counters.gradients += self.obj.full_cost();
            }
        }
    }

    /// Exact gradient at `z + shift`.
    pub fn full_gradient(&mut self, z: &[f64], out: &mut [f64]) {
        let x = Self::shifted(&self.shift, z, &mut self.point);
        self.obj.gradient(x, out);
        self.counters.gradients += self.obj.full_cost();
    }

    /// Control-variate gradient with anchor `anchor + shift` and anchor
    /// direction `h`.
    pub fn control_variate(&mut self, z: &[f64], anchor: &[f64], h: &[f64], out: &mut [f64]) {
        let x = Self::shifted(&self.shift, z, &mut self.point);
        let a = Self::shifted(&self.shift, anchor, &mut self.anchor_point);
        let atoms = match self.batch {
            Some(b) => {
                self.sampler.draw(b, &mut self.atoms);
                self.counters.gradients += 2 * b as u64 * self.obj.atom_cost();
                Some(self.atoms.as_slice())
            }
            None => {
                self.counters.gradients += 2 * self.obj.full_cost();
                None
            }
        };
        control_variate(self.obj, x, a, atoms, self.factors, h, out, &mut self.scratch);
    }

    pub fn project(&self, z: &mut [f64]) {
        self.sub.project_null_mut(z);
    }

    /// One projection event: a schedule hit or a stage boundary.
    pub fn count_projection(&mut self) {
        self.counters.projections += 1;
        if self.consensus {
            self.counters.comm_rounds += 1;
        }
    }

    pub fn check_finite(&self, z: &[f64]) -> Result<()> {
        if z.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteIterate { iter: self.counters.iterations })
        }
    }

    pub fn to_original(&self, z: &[f64]) -> DVector<f64> {
        let mut x = DVector::from_column_slice(z);
        if let Some(s) = &self.shift {
            for (xi, si) in x.iter_mut().zip(s) {
                *xi += si;
            }
        }
        x
    }

    pub fn suboptimality(&self, x: &DVector<f64>) -> f64 {
        match self.reference {
            Some(f_star) => self.problem.value(x) - f_star,
            None => f64::NAN,
        }
    }

    fn push_row(&mut self, z: &[f64]) -> Result<f64> {
        let x = self.to_original(z);
        let sub = self.suboptimality(&x);
        let feas = self.problem.feasibility_residual(&x);
        self.trace.push(TraceRow {
            counters: self.counters,
            suboptimality: sub,
            feasibility: feas,
            wall_ns: self.clock.elapsed().as_nanos() as u64,
            restart: 0,
        })?;
        Ok(sub)
    }

    /// Records a row after a schedule hit, every `record_every` hits.
    pub fn record_hit(&mut self, z: &[f64]) -> Result<()> {
        self.projection_events += 1;
        if self.projection_events.is_multiple_of(self.record_every) {
            self.push_row(z)?;
        }
        Ok(())
    }

    /// Records the snapshot at the end of a stage.
    pub fn record_stage(&mut self, snapshot: &[f64]) -> Result<()> {
        let sub = self.push_row(snapshot)?;
        self.stage_suboptimality.push(sub);
        Ok(())
    }

    pub fn observe(&mut self, stage: u64, z: &[f64], u: Option<&[f64]>) {
        if let Some(obs) = self.observer.as_mut() {
            let x = Self::shifted(&self.shift, z, &mut self.point);
            match u {
                Some(u) => {
                    let u = Self::shifted(&self.shift, u, &mut self.anchor_point);
                    obs(&IterateEvent { stage, iter: self.counters.iterations, x, u: Some(u) });
                }
                None => obs(&IterateEvent { stage, iter: self.counters.iterations, x, u: None }),
            }
        }
    }

    /// Records the output as the final row and assembles the result.
    pub fn finish(mut self, output: &[f64], eta: f64) -> Result<super::SolverOutput> {
        let suboptimality = self.push_row(output)?;
        Ok(super::SolverOutput {
            y_hat: self.to_original(output),
            counters: self.counters,
            trace: self.trace,
            eta,
            suboptimality,
            stage_suboptimality: self.stage_suboptimality,
        })
    }
}
