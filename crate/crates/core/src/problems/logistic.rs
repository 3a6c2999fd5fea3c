use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LcpProblem, Objective, ObjectiveData};
use crate::error::{check_dim, Error, Result};
use crate::par;
use crate::projection::build_subspace;

/// Logistic regression with weight decay, one atom per sample.
///
/// Binary problems use a single weight vector and labels in `{0, 1}`.
/// With `K > 2` classes the parameter is the class-major stack of `K`
/// weight vectors and the loss is the softmax cross-entropy.
#[derive(Clone, Debug)]
pub struct Logistic {
    n: usize,
    cols: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    weight_decay: f64,
    smooth: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    /// `features` is `N × columns`; include a constant column for a bias.
    pub fn new(features: &DMatrix<f64>, labels: Vec<usize>, classes: usize, weight_decay: f64) -> Result<Self> {
        let (n, cols) = features.shape();
        if n == 0 || cols == 0 {
            return Err(Error::InvalidArgument("logistic regression needs samples and features".into()));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight decay must be non-negative".into()));
        }
        check_dim(n, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
        }
        let max_sq = features.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
        let coupling = if classes == 2 { 0.25 } else { 0.5 };
        Ok(Self {
            n,
            cols,
            classes,
            features: features.transpose().as_slice().to_vec(),
            labels,
            weight_decay,
            smooth: coupling * max_sq + weight_decay,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    fn n_logits(&self) -> usize {
        if self.classes == 2 {
            1
        } else {
            self.classes
        }
    }

    /// Loss of sample `i` without weight decay. Fills `coef` with
    /// `∂loss/∂logit` for every logit.
    fn sample(&self, x: &[f64], i: usize, coef: &mut [f64]) -> f64 {
        let f = self.row(i);
        let y = self.labels[i];
        let dot = |k: usize| -> f64 { x[k * self.cols..(k + 1) * self.cols].iter().zip(f).map(|(a, b)| a * b).sum() };
        if self.classes == 2 {
            let z = dot(0);
            let yf = y as f64;
            coef[0] = sigmoid(z) - yf;
            softplus(z) - yf * z
        } else {
            for (k, c) in coef.iter_mut().enumerate() {
                *c = dot(k);
            }
            let zy = coef[y];
            let m = coef.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + coef.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            for (k, c) in coef.iter_mut().enumerate() {
                *c = (*c - lse).exp() - if k == y { 1.0 } else { 0.0 };
            }
            lse - zy
        }
    }

    fn decay_value(&self, x: &[f64]) -> f64 {
        0.5 * self.weight_decay * x.iter().map(|v| v * v).sum::<f64>()
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.cols * self.n_logits()
    }

    fn atom_shape(&self) -> Vec<usize> {
        vec![self.n]
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k = self.n_logits();
        let total = par::chunked_scalar_sum(self.n, |range| {
            let mut coef = vec![0.0; k];
            range.map(|i| self.sample(x, i, &mut coef)).sum()
        });
        total / self.n as f64 + self.decay_value(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let k = self.n_logits();
        let cols = self.cols;
        let total = par::chunked_sum(self.n, x.len(), |range, acc| {
            let mut coef = vec![0.0; k];
            for i in range {
                self.sample(x, i, &mut coef);
                let f = self.row(i);
                for (c, &ck) in coef.iter().enumerate() {
                    for (a, fj) in acc[c * cols..(c + 1) * cols].iter_mut().zip(f) {
                        *a += ck * fj;
                    }
                }
            }
        });
        let inv = 1.0 / self.n as f64;
        for ((o, t), xi) in out.iter_mut().zip(&total).zip(x) {
            *o = t * inv + self.weight_decay * xi;
        }
    }

    fn add_atom_gradient(&self, x: &[f64], atom: &[usize], out: &mut [f64]) {
        let i = atom[0];
        let mut coef = vec![0.0; self.n_logits()];
        self.sample(x, i, &mut coef);
        let f = self.row(i);
        let cols = self.cols;
        for (c, &ck) in coef.iter().enumerate() {
            for j in 0..cols {
                out[c * cols + j] += ck * f[j] + self.weight_decay * x[c * cols + j];
            }
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smooth)
    }

    fn strong_convexity(&self) -> f64 {
        self.weight_decay
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let p = self.dim();
        let k = self.n_logits();
        let cols = self.cols;
        let total = par::chunked_sum(self.n, p * p, |range, acc| {
            let mut coef = vec![0.0; k];
            let mut probs = vec![0.0; k];
            for i in range {
                self.sample(x, i, &mut coef);
                let y = self.labels[i];
                let f = self.row(i);
                if self.classes == 2 {
                    let s = coef[0] + y as f64;
                    probs[0] = s * (1.0 - s);
                } else {
                    for c in 0..k {
                        probs[c] = coef[c] + if c == y { 1.0 } else { 0.0 };
                    }
                }
                for a in 0..k {
                    for b in 0..k {
                        let w = if self.classes == 2 {
                            probs[0]
                        } else {
                            (if a == b { probs[a] } else { 0.0 }) - probs[a] * probs[b]
                        };
                        if w == 0.0 {
                            continue;
                        }
                        for r in 0..cols {
                            let row = (a * cols + r) * p + b * cols;
                            let wf = w * f[r];
                            for (h, fc) in acc[row..row + cols].iter_mut().zip(f) {
                                *h += wf * fc;
                            }
                        }
                    }
                }
            }
        });
        let mut h = DMatrix::from_row_slice(p, p, &total) / self.n as f64;
        for i in 0..p {
            h[(i, i)] += self.weight_decay;
        }
        Some(h)
    }

    fn export(&self) -> Option<ObjectiveData> {
        Some(ObjectiveData::Logistic {
            features: self.features.clone(),
            columns: self.cols,
            labels: self.labels.clone(),
            classes: self.classes,
            weight_decay: self.weight_decay,
        })
    }
}

/// Synthetic logistic regression under a random equality constraint
/// `Aᵀx = 0`.
///
/// Features are standard normal scaled by `1/√d` plus a bias column; labels
/// are drawn from a planted model. The parameter dimension is `d + 1` for
/// two classes and `(d + 1)·K` otherwise.
pub fn make_constrained_logreg(
    seed: u64,
    n_samples: usize,
    d: usize,
    n_classes: usize,
    m_constraints: usize,
    weight_decay: f64,
) -> Result<LcpProblem> {
    if n_samples == 0 || d == 0 || n_classes < 2 {
        return Err(Error::InvalidArgument("need N >= 1, d >= 1 and at least two classes".into()));
    }
    let cols = d + 1;
    let p = if n_classes == 2 { cols } else { cols * n_classes };
    if m_constraints == 0 || m_constraints >= p {
        return Err(Error::InvalidArgument(format!("need 1 <= m_constraints < {p}, got {m_constraints}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (features, labels) = planted_samples(&mut rng, n_samples, d, n_classes, None);
    let a = DMatrix::from_fn(p, m_constraints, |_, _| StandardNormal.sample(&mut rng));
    let obj = Logistic::new(&features, labels, n_classes, weight_decay)?;
    LcpProblem::new(Arc::new(obj), build_subspace(&a, &DVector::zeros(m_constraints))?)
}

/// Features with a bias column and labels from a planted softmax model.
/// `planted` overrides the random class weights (`K_eff × (d+1)`).
pub(crate) fn planted_samples(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    classes: usize,
    planted: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, Vec<usize>) {
    let cols = d + 1;
    let k = if classes == 2 { 1 } else { classes };
    let owned;
    let w = match planted {
        Some(w) => w,
        None => {
            owned = DMatrix::from_fn(k, cols, |_, _| 2.0 * crate::rng::normal(&mut *rng));
            &owned
        }
    };
    let inv = 1.0 / (d as f64).sqrt();
    let mut features = DMatrix::zeros(n, cols);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut *rng);
            features[(i, j)] = z * inv;
        }
        features[(i, d)] = 1.0;
        let f = features.row(i).transpose();
        if classes == 2 {
            let p1 = sigmoid(w.row(0).transpose().dot(&f));
            labels.push(usize::from(rng.random::<f64>() < p1));
        } else {
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..classes {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let score = w.row(c).transpose().dot(&f) - (-u.ln()).ln();
                if score > best.1 {
                    best = (c, score);
                }
            }
            labels.push(best.0);
        }
    }
    (features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_point_value_is_log_two() {
        let f = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        for y in 0..2 {
            let obj = Logistic::new(&f, vec![y], 2, 0.0).unwrap();
            assert!((obj.value(&[0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
            let mut g = [0.0; 2];
            obj.gradient(&[0.0, 0.0], &mut g);
            let expected = 0.5 - y as f64;
            assert!((g[0]).abs() < 1e-15 && (g[1] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn multinomial_gradient_sums_to_zero_over_classes_without_decay() {
        let f = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -0.7, 1.0]);
        let obj = Logistic::new(&f, vec![0, 2], 3, 0.0).unwrap();
        let x = [0.1, -0.2, 0.4, 0.0, -0.3, 0.2];
        let mut g = [0.0; 6];
        obj.gradient(&x, &mut g);
        for j in 0..2 {
            assert!((g[j] + g[2 + j] + g[4 + j]).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_dimension_includes_bias() {
        let p = make_constrained_logreg(1, 20, 4, 3, 2, 1e-3).unwrap();
        assert_eq!(p.dim(), 15);
        let b = make_constrained_logreg(1, 20, 4, 2, 2, 1e-3).unwrap();
        assert_eq!(b.dim(), 5);
    }
}
