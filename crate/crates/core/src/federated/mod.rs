//! Local SGD, Local SVRG and Local ASVRG simulated over `n` workers.
//!
//! Workers run sequentially in a fixed order and synchronize by a
//! compensated left-to-right average. The arithmetic mirrors the
//! delayed-projection solvers on the consensus-lifted problem exactly, so
//! with coupled random streams the stacked worker states coincide with the
//! lifted iterates.

mod harness;

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::metrics::{ComplexityCounters, RunTrace, TraceRow};
use crate::problems::{lift_consensus, FederatedInstance, Objective};
use crate::projection::kahan_mean;
use crate::rng::AtomSampler;
use crate::solvers::engine::{batch_gradient, control_variate, fold_mean, WeightedAverage};
use crate::solvers::{IterateEvent, Observer, Sampling, SolverConfig, Variant};

pub use harness::{equivalence_harness, equivalence_harness_with, EquivalenceReport};

/// Communication accounting. Every synchronization and every anchor
/// broadcast is one round in which each worker uploads and receives one
/// vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommLog {
    pub rounds: u64,
    pub vectors_transferred: u64,
    pub bytes_equivalent: u64,
}

#[derive(Default)]
pub struct LocalOptions<'a> {
    /// Optimal value of the worker average `(1/n)Σ f_k`.
    pub reference_value: Option<f64>,
    /// Common starting point of all workers; defaults to zero.
    pub x0: Option<DVector<f64>>,
    pub run_id: Option<String>,
    /// Receives the stacked worker states after every iteration.
    pub observer: Option<Observer<'a>>,
}

#[derive(Clone, Debug)]
pub struct LocalOutput {
    pub x_hat: DVector<f64>,
    /// Average of the workers at the last synchronization.
    pub last_sync: DVector<f64>,
    pub trace: RunTrace,
    pub counters: ComplexityCounters,
    pub comm: CommLog,
    pub eta: f64,
    /// `f(x̂) − f*` for the worker average `f`, NaN without a reference.
    pub suboptimality: f64,
    pub stage_suboptimality: Vec<f64>,
}

struct Cluster<'a, 'o> {
    locals: &'a [std::sync::Arc<dyn Objective>],
    n: usize,
    d: usize,
    samplers: Vec<AtomSampler>,
    atoms: Vec<usize>,
    batch: Option<usize>,
    counters: ComplexityCounters,
    comm: CommLog,
    trace: RunTrace,
    reference: Option<f64>,
    clock: Instant,
    record_every: u64,
    events: u64,
    observer: Option<Observer<'o>>,
    stack: Vec<f64>,
    stack_u: Vec<f64>,
    scratch: Vec<f64>,
    last_sync: Vec<f64>,
    stage_suboptimality: Vec<f64>,
}

impl<'a, 'o> Cluster<'a, 'o> {
    fn new(
        fed: &'a FederatedInstance,
        config: &SolverConfig,
        opts: LocalOptions<'o>,
        variant: &str,
    ) -> Result<(Self, Vec<f64>)> {
        let d = fed.local_dim();
        let n = fed.n_workers();
        let x0 = match &opts.x0 {
            Some(x) => {
                check_dim(d, x.len())?;
                x.as_slice().to_vec()
            }
            None => vec![0.0; d],
        };
        let samplers = fed
            .locals()
            .iter()
            .zip(fed.keys())
            .map(|(l, &k)| AtomSampler::new(config.seed, &[k], &l.atom_shape()))
            .collect();
        let cluster = Self {
            locals: fed.locals(),
            n,
            d,
            samplers,
            atoms: Vec::new(),
            batch: match config.sampling {
                Sampling::Full => None,
                Sampling::Batch(b) => Some(b),
            },
            counters: ComplexityCounters::default(),
            comm: CommLog::default(),
            trace: RunTrace::new(opts.run_id.unwrap_or_else(|| variant.to_string()), variant),
            reference: opts.reference_value,
            clock: Instant::now(),
            record_every: config.record_every as u64,
            events: 0,
            observer: opts.observer,
            stack: vec![0.0; n * d],
            stack_u: vec![0.0; n * d],
            scratch: vec![0.0; d],
            last_sync: x0.clone(),
            stage_suboptimality: Vec::new(),
        };
        Ok((cluster, x0))
    }

    fn gradient(&mut self, k: usize, x: &[f64], out: &mut [f64]) {
        let obj = self.locals[k].as_ref();
        match self.batch {
            Some(b) => {
                self.samplers[k].draw(b, &mut self.atoms);
                batch_gradient(obj, x, &self.atoms, 1, out);
                self.counters.gradients += b as u64;
            }
            None => {
                obj.gradient(x, out);
                self.counters.gradients += obj.full_cost();
            }
        }
    }

    fn control_variate(&mut self, k: usize, x: &[f64], anchor: &[f64], h: &[f64], out: &mut [f64]) {
        let obj = self.locals[k].as_ref();
        let atoms = match self.batch {
            Some(b) => {
                self.samplers[k].draw(b, &mut self.atoms);
                self.counters.gradients += 2 * b as u64;
                Some(self.atoms.as_slice())
            }
            None => {
                self.counters.gradients += 2 * obj.full_cost();
                None
            }
        };
        control_variate(obj, x, anchor, atoms, 1, h, out, &mut self.scratch);
    }

    /// Average of the local full gradients at a common point, broadcast as
    /// the anchor direction. Counts one round.
    fn anchor(&mut self, at: &[f64], h: &mut [f64]) {
        let grads: Vec<Vec<f64>> = self
            .locals
            .iter()
            .map(|l| {
                let mut g = vec![0.0; self.d];
                l.gradient(at, &mut g);
                self.counters.gradients += l.full_cost();
                g
            })
            .collect();
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = kahan_mean(grads.iter().map(|g| g[j]), self.n);
        }
        self.count_round();
    }

    fn average(&self, states: &[Vec<f64>]) -> Vec<f64> {
        (0..self.d).map(|j| kahan_mean(states.iter().map(|s| s[j]), self.n)).collect()
    }

    /// Sets every worker state to the average, without counting.
    fn sync(&mut self, states: &mut [Vec<f64>]) {
        let avg = self.average(states);
        for s in states.iter_mut() {
            s.copy_from_slice(&avg);
        }
        self.last_sync = avg;
    }

    fn count_round(&mut self) {
        self.counters.projections += 1;
        self.counters.comm_rounds += 1;
        self.comm.rounds += 1;
        self.comm.vectors_transferred += 2 * self.n as u64;
        self.comm.bytes_equivalent += 2 * (self.n * self.d * 8) as u64;
    }

    fn suboptimality(&self, x: &[f64]) -> f64 {
        match self.reference {
            Some(f_star) => self.locals.iter().map(|l| l.value(x)).sum::<f64>() / self.n as f64 - f_star,
            None => f64::NAN,
        }
    }

    fn push_row(&mut self, x: &[f64]) -> Result<f64> {
        let sub = self.suboptimality(x);
        self.trace.push(TraceRow {
            counters: self.counters,
            suboptimality: sub,
            feasibility: 0.0,
            wall_ns: self.clock.elapsed().as_nanos() as u64,
            restart: 0,
        })?;
        Ok(sub)
    }

    fn record_hit(&mut self) -> Result<()> {
        self.events += 1;
        if self.events.is_multiple_of(self.record_every) {
            let x = self.last_sync.clone();
            self.push_row(&x)?;
        }
        Ok(())
    }

    fn record_stage(&mut self, snapshot: &[f64]) -> Result<()> {
        let sub = self.push_row(snapshot)?;
        self.stage_suboptimality.push(sub);
        Ok(())
    }

    fn observe(&mut self, stage: u64, xs: &[Vec<f64>], us: Option<&[Vec<f64>]>) {
        let Some(obs) = self.observer.as_mut() else { return };
        let d = self.d;
        for (k, x) in xs.iter().enumerate() {
            self.stack[k * d..(k + 1) * d].copy_from_slice(x);
        }
        let u = us.map(|us| {
            for (k, u) in us.iter().enumerate() {
                self.stack_u[k * d..(k + 1) * d].copy_from_slice(u);
            }
            self.stack_u.as_slice()
        });
        obs(&IterateEvent { stage, iter: self.counters.iterations, x: &self.stack, u });
    }

    fn finish(mut self, x_hat: Vec<f64>, eta: f64) -> Result<LocalOutput> {
        let suboptimality = self.push_row(&x_hat)?;
        Ok(LocalOutput {
            x_hat: DVector::from_vec(x_hat),
            last_sync: DVector::from_vec(self.last_sync),
            trace: self.trace,
            counters: self.counters,
            comm: self.comm,
            eta,
            suboptimality,
            stage_suboptimality: self.stage_suboptimality,
        })
    }
}

fn check_finite(states: &[Vec<f64>], iter: u64) -> Result<()> {
    if states.iter().all(|s| s.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(crate::Error::NonFiniteIterate { iter })
    }
}

/// Step size and strong convexity shared with the lifted problem.
fn constants(fed: &FederatedInstance, config: &SolverConfig, variant: Variant) -> Result<(f64, f64, f64)> {
    let lifted = lift_consensus(fed)?;
    Ok((config.resolve_eta(&lifted, variant)?, config.mu_for(&lifted), lifted.smoothness()))
}

pub fn local_sgd(fed: &FederatedInstance, config: &SolverConfig) -> Result<LocalOutput> {
    local_sgd_with(fed, config, LocalOptions::default())
}

/// Each worker runs SGD on its own objective; at schedule hits all workers
/// are replaced by their average. Returns the average over workers of the
/// `(1 − μη)`-weighted iterate averages.
pub fn local_sgd_with(fed: &FederatedInstance, config: &SolverConfig, opts: LocalOptions<'_>) -> Result<LocalOutput> {
    let config = SolverConfig { variant: Variant::DpSgd, ..config.clone() };
    config.validate()?;
    let (eta, mu, _) = constants(fed, &config, Variant::DpSgd)?;
    let schedule = config.schedule_for(config.total_iters)?;
    let (mut c, x0) = Cluster::new(fed, &config, opts, "local_sgd")?;
    let (n, d) = (c.n, c.d);
    let mut xs = vec![x0; n];
    let mut avgs: Vec<WeightedAverage> = (0..n).map(|_| WeightedAverage::new(1.0 - mu * eta, d)).collect();
    let mut g = vec![0.0; d];

    for t in 1..=config.total_iters {
        for k in 0..n {
            avgs[k].fold(&xs[k]);
            c.gradient(k, &xs[k], &mut g);
            for (xi, gi) in xs[k].iter_mut().zip(&g) {
                *xi -= eta * gi;
            }
        }
        c.counters.iterations += 1;
        check_finite(&xs, c.counters.iterations)?;
        if schedule.contains(t) {
            c.sync(&mut xs);
            c.count_round();
            c.record_hit()?;
        }
        c.observe(0, &xs, None);
    }

    let values: Vec<Vec<f64>> = avgs.into_iter().map(|a| a.value).collect();
    let x_hat = c.average(&values);
    c.count_round();
    c.finish(x_hat, eta)
}

pub fn local_svrg(fed: &FederatedInstance, config: &SolverConfig) -> Result<LocalOutput> {
    local_svrg_with(fed, config, LocalOptions::default())
}

/// Local SVRG: per stage, the anchor is the average of the local full
/// gradients at the shared snapshot; workers take control-variate steps and
/// synchronize at schedule hits.
pub fn local_svrg_with(fed: &FederatedInstance, config: &SolverConfig, opts: LocalOptions<'_>) -> Result<LocalOutput> {
    let config = SolverConfig { variant: Variant::DpSvrg, ..config.clone() };
    config.validate()?;
    let (eta, mu, _) = constants(fed, &config, Variant::DpSvrg)?;
    let schedule = config.schedule_for(config.inner_m)?;
    let (mut c, x0) = Cluster::new(fed, &config, opts, "local_svrg")?;
    let (n, d) = (c.n, c.d);
    let mut xs = vec![x0; n];
    c.sync(&mut xs);
    let mut snapshot = xs[0].clone();
    let mut snapshot_mean = vec![0.0; d];
    let mut avgs: Vec<WeightedAverage> = (0..n).map(|_| WeightedAverage::new(1.0 - mu * eta, d)).collect();
    let (mut h, mut g) = (vec![0.0; d], vec![0.0; d]);

    for s in 0..config.stages {
        c.anchor(&snapshot, &mut h);
        avgs.iter_mut().for_each(WeightedAverage::reset);
        for t in 0..config.inner_m {
            for k in 0..n {
                avgs[k].fold(&xs[k]);
                c.control_variate(k, &xs[k], &snapshot, &h, &mut g);
                for (xi, gi) in xs[k].iter_mut().zip(&g) {
                    *xi -= eta * gi;
                }
            }
            c.counters.iterations += 1;
            check_finite(&xs, c.counters.iterations)?;
            if schedule.contains(t + 1) {
                c.sync(&mut xs);
                c.count_round();
                c.record_hit()?;
            }
            c.observe(s as u64, &xs, None);
        }
        c.sync(&mut xs);
        let values: Vec<Vec<f64>> = avgs.iter().map(|a| a.value.clone()).collect();
        snapshot = c.average(&values);
        c.counters.stages += 1;
        c.record_stage(&snapshot)?;
        fold_mean(&mut snapshot_mean, &snapshot, s + 1);
    }

    let out = if mu > 0.0 { snapshot } else { snapshot_mean };
    c.finish(out, eta)
}

pub fn local_asvrg(fed: &FederatedInstance, config: &SolverConfig) -> Result<LocalOutput> {
    local_asvrg_with(fed, config, LocalOptions::default())
}

/// Local accelerated SVRG: workers keep both sequences `u` and `x` and
/// synchronize them jointly at schedule hits.
pub fn local_asvrg_with(fed: &FederatedInstance, config: &SolverConfig, opts: LocalOptions<'_>) -> Result<LocalOutput> {
    let config = SolverConfig { variant: Variant::DpAsvrg, ..config.clone() };
    config.validate()?;
    let (eta, mu, l) = constants(fed, &config, Variant::DpAsvrg)?;
    let mut theta = crate::solvers::engine_theta(&config, eta, l, mu)?;
    let schedule = config.schedule_for(config.inner_m)?;
    let (mut c, x0) = Cluster::new(fed, &config, opts, "local_asvrg")?;
    let (n, d) = (c.n, c.d);
    let mut xs = vec![x0; n];
    c.sync(&mut xs);
    let mut snapshot = xs[0].clone();
    let mut us = xs.clone();
    let mut snapshot_mean = vec![0.0; d];
    let mut means = vec![vec![0.0; d]; n];
    let (mut h, mut g) = (vec![0.0; d], vec![0.0; d]);

    for s in 0..config.stages {
        let th = theta.current();
        c.anchor(&snapshot, &mut h);
        for (x, m) in xs.iter_mut().zip(means.iter_mut()) {
            x.copy_from_slice(&snapshot);
            m.fill(0.0);
        }
        for t in 0..config.inner_m {
            let step = eta / th;
            for k in 0..n {
                c.control_variate(k, &xs[k], &snapshot, &h, &mut g);
                for ((ui, xi), (gi, si)) in us[k].iter_mut().zip(xs[k].iter_mut()).zip(g.iter().zip(&snapshot)) {
                    *ui -= step * gi;
                    *xi = si + th * (*ui - si);
                }
            }
            c.counters.iterations += 1;
            check_finite(&xs, c.counters.iterations)?;
            if schedule.contains(t + 1) {
                c.sync(&mut xs);
                let x_sync = c.last_sync.clone();
                c.sync(&mut us);
                c.last_sync = x_sync;
                c.count_round();
                c.record_hit()?;
            }
            for (m, x) in means.iter_mut().zip(&xs) {
                fold_mean(m, x, t + 1);
            }
            c.observe(s as u64, &xs, Some(&us));
        }
        let x_sync = c.last_sync.clone();
        c.sync(&mut us);
        c.last_sync = x_sync;
        snapshot = c.average(&means);
        c.counters.stages += 1;
        c.record_stage(&snapshot)?;
        fold_mean(&mut snapshot_mean, &snapshot, s + 1);
        theta.advance()?;
    }

    let out = if mu > 0.0 { snapshot_mean } else { snapshot };
    c.finish(out, eta)
}
