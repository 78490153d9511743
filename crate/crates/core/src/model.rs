//! Binary classifier head over embeddings: one ReLU hidden layer, inverted
//! dropout and a logistic output, trained with Adam and early stopping on
//! dev macro-F1.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::alloop::f1_binary;
use crate::error::{Error, Result};
use crate::io;
use crate::par;
use crate::rng::{self, Stream};
use crate::types::EmbeddingMatrix;

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, mask drawn from a stream seeded with `seed`.
    Dropout { seed: u64 },
}

/// Parameters live in one flat vector laid out as
/// `[w1 (input x hidden, row-major), b1 (hidden), w2 (hidden), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    input_dim: usize,
    hidden_dim: usize,
    dropout_rate: f64,
    params: Vec<f64>,
}

impl ClassifierHead {
    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        input_dim * hidden_dim + 2 * hidden_dim + 1
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, dropout_rate: f64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidArgument(
                "classifier dims must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            dropout_rate,
            params: vec![0.0; Self::param_count(input_dim, hidden_dim)],
        })
    }

    /// Glorot-uniform weights and zero biases from the `(seed, "head-init")`
    /// stream.
    pub fn init(input_dim: usize, hidden_dim: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        let mut head = Self::zeros(input_dim, hidden_dim, dropout_rate)?;
        let mut rng = rng::fork(seed, "head-init");
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let a2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let u1 = Uniform::new(-a1, a1).expect("valid range");
        let u2 = Uniform::new(-a2, a2).expect("valid range");
        let (w1_end, w2_start) = (head.w1_range().end, head.w2_range().start);
        for p in &mut head.params[..w1_end] {
            *p = u1.sample(&mut rng);
        }
        for p in &mut head.params[w2_start..w2_start + hidden_dim] {
            *p = u2.sample(&mut rng);
        }
        Ok(head)
    }

    pub fn from_parts(
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        dropout_rate: f64,
    ) -> Result<Self> {
        let hidden = b1.len();
        if hidden == 0 || w2.len() != hidden || !w1.len().is_multiple_of(hidden) || w1.is_empty() {
            return Err(Error::InvalidArgument("inconsistent classifier shapes".into()));
        }
        let mut head = Self::zeros(w1.len() / hidden, hidden, dropout_rate)?;
        head.params = [w1, b1, w2, vec![b2]].concat();
        if head.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite classifier weight".into()));
        }
        Ok(head)
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.input_dim * self.hidden_dim
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.w1_range().end;
        s..s + self.hidden_dim
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.hidden_dim
    }

    fn b2_index(&self) -> usize {
        self.params.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        self.dropout_rate = rate;
        Ok(())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Per-unit multipliers for one dropout pass: 0 for dropped units,
    /// `1 / (1 - rate)` for survivors.
    pub fn dropout_mask(&self, rng: &mut Stream) -> Vec<f64> {
        let keep = 1.0 - self.dropout_rate;
        (0..self.hidden_dim)
            .map(|_| {
                if rng.random::<f64>() < self.dropout_rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect()
    }

    /// Hidden pre-activations `w1^T x + b1`.
    fn hidden_pre(&self, x: &[f32]) -> Vec<f64> {
        let h = self.hidden_dim;
        let mut pre = self.params[self.b1_range()].to_vec();
        let w1 = &self.params[self.w1_range()];
        for (i, &xi) in x.iter().enumerate() {
            let xi = f64::from(xi);
            if xi == 0.0 {
                continue;
            }
            for (acc, w) in pre.iter_mut().zip(&w1[i * h..(i + 1) * h]) {
                *acc += xi * w;
            }
        }
        pre
    }

    fn logit_from_pre(&self, pre: &[f64], mask: Option<&[f64]>) -> f64 {
        let w2 = &self.params[self.w2_range()];
        let mut z = self.params[self.b2_index()];
        for (j, (&p, &w)) in pre.iter().zip(w2).enumerate() {
            if p > 0.0 {
                z += w * p * mask.map_or(1.0, |m| m[j]);
            }
        }
        z
    }

    /// Output logit, with an optional dropout mask.
    pub fn logit(&self, x: &[f32], mask: Option<&[f64]>) -> f64 {
        self.logit_from_pre(&self.hidden_pre(x), mask)
    }

    pub fn forward(&self, x: &[f32], mode: Mode) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let z = match mode {
            Mode::Dropout { seed } if self.dropout_rate > 0.0 => {
                let mask = self.dropout_mask(&mut Stream::seed_from_u64(seed));
                self.logit(x, Some(&mask))
            }
            _ => self.logit(x, None),
        };
        Ok(sigmoid(z))
    }

    /// Probabilities of `x` under one dropout pass per seed; each entry
    /// equals `forward(x, Mode::Dropout { seed })`.
    pub fn dropout_passes(&self, x: &[f32], seeds: &[u64]) -> Vec<f64> {
        let pre = self.hidden_pre(x);
        seeds
            .iter()
            .map(|&seed| {
                if self.dropout_rate > 0.0 {
                    let mask = self.dropout_mask(&mut Stream::seed_from_u64(seed));
                    sigmoid(self.logit_from_pre(&pre, Some(&mask)))
                } else {
                    sigmoid(self.logit_from_pre(&pre, None))
                }
            })
            .collect()
    }

    /// Eval-mode probabilities for the given rows.
    pub fn predict(&self, embeddings: &EmbeddingMatrix, ids: &[usize]) -> Result<Vec<f64>> {
        if embeddings.dim() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                actual: embeddings.dim(),
            });
        }
        Ok(par::map_slice(ids, |&id| sigmoid(self.logit(embeddings.row(id), None))))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(io::HEADER_LEN + 4 + self.params.len() * 4);
        out.extend_from_slice(&io::CLASSIFIER_MAGIC);
        out.push(io::FORMAT_VERSION);
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.dropout_rate as f32).to_le_bytes());
        let weights: Vec<f32> = self.params.iter().map(|&p| p as f32).collect();
        io::put_f32s(&mut out, &weights);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (input, hidden, rest) = io::split_header(bytes, io::CLASSIFIER_MAGIC)?;
        let count = Self::param_count(input, hidden) as u64;
        io::check_len(bytes.len() as u64, io::HEADER_LEN as u64 + 4 + count * 4)?;
        let values = io::get_f32s(rest);
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut head = Self::zeros(input, hidden, f64::from(values[0]))?;
        head.params = values[1..].iter().map(|&v| f64::from(v)).collect();
        Ok(head)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_bytes(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over `xs` and its gradient w.r.t. the flat
/// parameter vector. `masks[i]`, when given, is the dropout multiplier
/// vector applied to sample `i`.
pub fn loss_and_grad(
    head: &ClassifierHead,
    xs: &[&[f32]],
    ys: &[bool],
    masks: Option<&[Vec<f64>]>,
) -> (f64, Vec<f64>) {
    let h = head.hidden_dim;
    let mut grad = vec![0.0; head.params.len()];
    let (w1r, b1r, w2r, b2i) = (head.w1_range(), head.b1_range(), head.w2_range(), head.b2_index());
    let w2 = &head.params[w2r.clone()];
    let scale = 1.0 / xs.len() as f64;
    let mut loss = 0.0;
    for (s, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let mask = masks.map(|m| m[s].as_slice());
        let pre = head.hidden_pre(x);
        let z = head.logit_from_pre(&pre, mask);
        let target = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - target * z;
        let dz = (sigmoid_raw(z) - target) * scale;
        grad[b2i] += dz;
        let mut dpre = vec![0.0; h];
        for j in 0..h {
            if pre[j] > 0.0 {
                let m = mask.map_or(1.0, |m| m[j]);
                grad[w2r.start + j] += dz * pre[j] * m;
                dpre[j] = dz * w2[j] * m;
            }
        }
        for (g, d) in grad[b1r.clone()].iter_mut().zip(&dpre) {
            *g += d;
        }
        let gw1 = &mut grad[w1r.clone()];
        for (i, &xi) in x.iter().enumerate() {
            let xi = f64::from(xi);
            if xi == 0.0 {
                continue;
            }
            for (g, d) in gw1[i * h..(i + 1) * h].iter_mut().zip(&dpre) {
                *g += xi * d;
            }
        }
    }
    (loss * scale, grad)
}

#[inline]
fn sigmoid_raw(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub bias_correction: bool,
}

impl AdamConfig {
    pub fn new(lr: f64, bias_correction: bool) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One Adam update of `params` in place.
///
/// With bias correction off, the raw moment estimates are used directly.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::DimMismatch {
            expected: state.m.len(),
            actual: params.len().min(grads.len()),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { step: state.t + 1 });
    }
    state.t += 1;
    let c = state.config;
    let (bc1, bc2) = if c.bias_correction {
        let t = state.t as i32;
        (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t))
    } else {
        (1.0, 1.0)
    };
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    /// Labeled sets up to this size train full-batch.
    pub full_batch_limit: usize,
    pub minibatch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            lr: 1e-2,
            hidden_dim: DEFAULT_HIDDEN,
            dropout_rate: DEFAULT_DROPOUT,
            full_batch_limit: 256,
            minibatch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_dev_f1: f64,
    /// 1-based.
    pub best_epoch: usize,
    pub dev_f1_per_epoch: Vec<f64>,
    pub dev_loss_per_epoch: Vec<f64>,
    pub stopped_early: bool,
}

/// Positive-class F1 (the per-category term of macro-F1) and mean BCE on
/// `set`, in eval mode.
fn evaluate(head: &ClassifierHead, emb: &EmbeddingMatrix, set: &[(usize, bool)]) -> (f64, f64) {
    let logits: Vec<f64> = par::map_slice(set, |&(id, _)| head.logit(emb.row(id), None));
    let preds: Vec<bool> = logits.iter().map(|&z| z >= 0.0).collect();
    let truth: Vec<bool> = set.iter().map(|&(_, y)| y).collect();
    let f1 = f1_binary(&preds, &truth).expect("equal lengths").2;
    let loss = logits
        .iter()
        .zip(&truth)
        .map(|(&z, &y)| softplus(z) - if y { z } else { 0.0 })
        .sum::<f64>()
        / set.len().max(1) as f64;
    (f1, loss)
}

/// Train a freshly initialized head on `train`, early-stopping on dev
/// macro-F1 and returning the parameters of the best dev epoch.
///
/// An epoch improves on the best so far when its dev F1 is higher, or equal
/// with a lower dev loss. Without the loss tie-break a minority class that
/// is not yet predicted at all keeps F1 flat at 0 and patience runs out
/// before the head learns it.
///
/// An empty `dev` set falls back to monitoring the training set.
pub fn train(
    embeddings: &EmbeddingMatrix,
    train: &[(usize, bool)],
    dev: &[(usize, bool)],
    config: &TrainConfig,
    seed: u64,
) -> Result<(ClassifierHead, TrainReport)> {
    let positives = train.iter().filter(|&&(_, y)| y).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::DegenerateTraining(format!(
            "{} samples, {positives} positive; need both classes",
            train.len()
        )));
    }
    if config.max_epochs == 0 || config.minibatch == 0 {
        return Err(Error::InvalidArgument("epochs and minibatch must be >= 1".into()));
    }
    let monitor = if dev.is_empty() { train } else { dev };

    let mut head = ClassifierHead::init(embeddings.dim(), config.hidden_dim, config.dropout_rate, seed)?;
    let mut adam = AdamState::new(head.params.len(), AdamConfig::new(config.lr, true));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = if train.len() <= config.full_batch_limit {
        train.len()
    } else {
        config.minibatch
    };

    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0usize, head.clone());
    let mut report = TrainReport {
        epochs_run: 0,
        best_dev_f1: 0.0,
        best_epoch: 0,
        dev_f1_per_epoch: Vec::new(),
        dev_loss_per_epoch: Vec::new(),
        stopped_early: false,
    };

    for epoch in 1..=config.max_epochs {
        let mut rng = rng::fork_indexed(seed, "train-epoch", epoch as u64);
        if batch < train.len() {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xs: Vec<&[f32]> = chunk.iter().map(|&i| embeddings.row(train[i].0)).collect();
            let ys: Vec<bool> = chunk.iter().map(|&i| train[i].1).collect();
            let masks: Option<Vec<Vec<f64>>> = (head.dropout_rate > 0.0)
                .then(|| chunk.iter().map(|_| head.dropout_mask(&mut rng)).collect());
            let (loss, grad) = loss_and_grad(&head, &xs, &ys, masks.as_deref());
            epoch_loss += loss;
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam_step(&mut adam, &mut head.params, &grad).map_err(|_| Error::Diverged { epoch })?;
        }

        let (f1, loss) = evaluate(&head, embeddings, monitor);
        report.dev_f1_per_epoch.push(f1);
        report.dev_loss_per_epoch.push(loss);
        report.epochs_run = epoch;
        if f1 > best.0 || (f1 == best.0 && loss < best.1) {
            best = (f1, loss, epoch, head.clone());
        } else if epoch - best.2 >= config.patience {
            report.stopped_early = true;
            break;
        }
    }

    report.best_dev_f1 = best.0;
    report.best_epoch = best.2;
    Ok((best.3, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticSpec};

    fn random_head(input: usize, hidden: usize, seed: u64) -> ClassifierHead {
        let mut head = ClassifierHead::init(input, hidden, 0.3, seed).unwrap();
        let mut rng = rng::fork(seed, "test-biases");
        for p in head.params_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
        head
    }

    #[test]
    fn zero_head_gives_one_half() {
        let head = ClassifierHead::zeros(4, 3, 0.1).unwrap();
        assert_eq!(head.forward(&[1.0, -2.0, 0.5, 3.0], Mode::Eval).unwrap(), 0.5);
    }

    #[test]
    fn zero_rate_dropout_equals_eval() {
        let mut head = random_head(5, 7, 1);
        head.set_dropout_rate(0.0).unwrap();
        let x = [0.3, -0.1, 0.9, 0.0, 0.2];
        assert_eq!(
            head.forward(&x, Mode::Dropout { seed: 9 }).unwrap(),
            head.forward(&x, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn dropout_seeded() {
        let head = random_head(5, 64, 2);
        let x = [0.3, -0.1, 0.9, 0.4, 0.2];
        let a = head.forward(&x, Mode::Dropout { seed: 1 }).unwrap();
        assert_eq!(a, head.forward(&x, Mode::Dropout { seed: 1 }).unwrap());
        let distinct = (2..10)
            .map(|s| head.forward(&x, Mode::Dropout { seed: s }).unwrap())
            .filter(|&b| b != a)
            .count();
        assert!(distinct > 0);
    }

    #[test]
    fn forward_checks_dim() {
        let head = ClassifierHead::zeros(3, 2, 0.0).unwrap();
        assert!(matches!(
            head.forward(&[1.0], Mode::Eval),
            Err(Error::DimMismatch { expected: 3, actual: 1 })
        ));
    }

    fn finite_difference_check(masks: bool) {
        for seed in 0..4u64 {
            let (input, hidden, n) = (6, 5, 9);
            let head = random_head(input, hidden, seed);
            let mut rng = rng::fork(seed, "fd-data");
            let xs_owned: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..input).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                .collect();
            let xs: Vec<&[f32]> = xs_owned.iter().map(Vec::as_slice).collect();
            let ys: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            let mask_vec: Vec<Vec<f64>> = (0..n).map(|_| head.dropout_mask(&mut rng)).collect();
            let m = masks.then_some(mask_vec.as_slice());
            let (_, grad) = loss_and_grad(&head, &xs, &ys, m);
            let h = 1e-6;
            for k in 0..head.params.len() {
                let mut plus = head.clone();
                plus.params[k] += h;
                let mut minus = head.clone();
                minus.params[k] -= h;
                let fd = (loss_and_grad(&plus, &xs, &ys, m).0 - loss_and_grad(&minus, &xs, &ys, m).0)
                    / (2.0 * h);
                let denom = fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(
                    (fd - grad[k]).abs() / denom < 1e-4 || (fd - grad[k]).abs() < 1e-9,
                    "param {k}: analytic {} vs numeric {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        finite_difference_check(false);
    }

    #[test]
    fn gradient_matches_finite_differences_under_dropout() {
        finite_difference_check(true);
    }

    #[test]
    fn adam_zero_gradient_only_ticks() {
        let mut state = AdamState::new(3, AdamConfig::new(0.1, true));
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut state, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // t = 1 with bias correction: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps).
        for g in [0.5, -3.0, 1e-3] {
            let lr = 0.01;
            let mut state = AdamState::new(1, AdamConfig::new(lr, true));
            let mut p = vec![0.0];
            adam_step(&mut state, &mut p, &[g]).unwrap();
            let expected = -lr * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
        }
    }

    #[test]
    fn adam_without_bias_correction_uses_raw_moments() {
        let (lr, g) = (0.01f64, 2.0f64);
        let mut state = AdamState::new(1, AdamConfig::new(lr, false));
        let mut p = vec![0.0];
        adam_step(&mut state, &mut p, &[g]).unwrap();
        let (m, v) = (0.1 * g, 0.001 * g * g);
        assert!((p[0] + lr * m / (v.sqrt() + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_descends_a_quadratic_bowl() {
        let mut state = AdamState::new(1, AdamConfig::new(0.01, true));
        let mut theta = vec![1.0f64];
        let mut trace = vec![];
        for _ in 0..300 {
            let g = 2.0 * theta[0];
            adam_step(&mut state, &mut theta, &[g]).unwrap();
            trace.push(theta[0].abs());
        }
        // Reference scalar simulation of the same recurrences.
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &got) in trace.iter().enumerate() {
            let g = 2.0 * th;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let t = (t + 1) as i32;
            th -= 0.01 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((th.abs() - got).abs() < 1e-12);
        }
        // While far from the minimum, |theta| shrinks every step.
        for w in trace[..80].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(trace[299] < 0.05);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut state = AdamState::new(1, AdamConfig::new(0.1, true));
        let mut p = vec![0.0];
        assert!(matches!(
            adam_step(&mut state, &mut p, &[f64::NAN]),
            Err(Error::NonFiniteGradient { step: 1 })
        ));
        assert_eq!(state.step_count(), 0);
    }

    fn separable_fixture() -> (EmbeddingMatrix, Vec<(usize, bool)>) {
        let syn = generate_synthetic(&SyntheticSpec {
            n_classes: 2,
            n_samples: 20,
            dim: 8,
            class_prevalences: vec![0.5, 0.5],
            center_separation: 1.0,
            noise_sigma: 1e-3,
            seed: 11,
        })
        .unwrap();
        let labeled = (0..20).map(|i| (i, syn.classes[i] == 1)).collect();
        (syn.embeddings, labeled)
    }

    #[test]
    fn separable_toy_reaches_perfect_f1() {
        let (emb, labeled) = separable_fixture();
        let (head, report) = train(&emb, &labeled, &[], &TrainConfig::default(), 5).unwrap();
        assert!(report.epochs_run <= 100);
        let probs = head.predict(&emb, &(0..20).collect::<Vec<_>>()).unwrap();
        let preds: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
        let truth: Vec<bool> = labeled.iter().map(|&(_, y)| y).collect();
        assert_eq!(f1_binary(&preds, &truth).unwrap().2, 1.0);
    }

    #[test]
    fn single_class_training_is_degenerate() {
        let (emb, _) = separable_fixture();
        let only_pos: Vec<(usize, bool)> = (0..5).map(|i| (i, true)).collect();
        assert!(matches!(
            train(&emb, &only_pos, &[], &TrainConfig::default(), 0),
            Err(Error::DegenerateTraining(_))
        ));
    }

    #[test]
    fn training_is_deterministic_and_respects_patience() {
        let (emb, labeled) = separable_fixture();
        let cfg = TrainConfig { patience: 3, ..TrainConfig::default() };
        let (a, ra) = train(&emb, &labeled[..12], &labeled[12..], &cfg, 8).unwrap();
        let (b, rb) = train(&emb, &labeled[..12], &labeled[12..], &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.epochs_run <= ra.best_epoch + cfg.patience + 1);
        if ra.stopped_early {
            assert_eq!(ra.epochs_run, ra.best_epoch + cfg.patience);
        }
    }

    #[test]
    fn mc_dropout_mean_error_shrinks_with_passes() {
        let head = random_head(6, 64, 4);
        let x = [0.5f32, -0.2, 0.1, 0.7, -0.4, 0.3];
        let reference: f64 = (0..20_000)
            .map(|s| head.forward(&x, Mode::Dropout { seed: 1_000_000 + s }).unwrap())
            .sum::<f64>()
            / 20_000.0;
        let err = |passes: u64, offset: u64| -> f64 {
            // Average absolute error over several independent estimates.
            (0..40)
                .map(|r| {
                    let mean = (0..passes)
                        .map(|p| head.forward(&x, Mode::Dropout { seed: offset + r * passes + p }).unwrap())
                        .sum::<f64>()
                        / passes as f64;
                    (mean - reference).abs()
                })
                .sum::<f64>()
                / 40.0
        };
        let (e4, e400) = (err(4, 0), err(400, 50_000));
        // 1/sqrt(passes) scaling predicts a 10x reduction; allow generous slack.
        assert!(e400 < e4 / 3.0, "e4 = {e4}, e400 = {e400}");
    }

    #[test]
    fn head_container_round_trip() {
        let head = random_head(3, 4, 6);
        let back = ClassifierHead::decode(&head.encode()).unwrap();
        assert_eq!(back.input_dim(), 3);
        assert_eq!(back.hidden_dim(), 4);
        for (a, b) in back.params().iter().zip(head.params()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
    }
}
