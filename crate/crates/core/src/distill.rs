//! Distilling a teacher embedding space into a student space: a linear
//! projection `x W + b` fitted to teacher embeddings by mean squared error.
//!
//! MSE here is the mean over samples of the mean over output coordinates of
//! the squared difference.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{adam_step, AdamConfig, AdamState};
use crate::par;
use crate::rng;
use crate::types::EmbeddingMatrix;

/// Linear map from student to teacher space. `weights` is
/// `dim_in x dim_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    dim_in: usize,
    dim_out: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ProjectionHead {
    pub fn new(dim_in: usize, dim_out: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::InvalidArgument("projection dims must be >= 1".into()));
        }
        if weights.len() != dim_in * dim_out {
            return Err(Error::DimMismatch {
                expected: dim_in * dim_out,
                actual: weights.len(),
            });
        }
        if bias.len() != dim_out {
            return Err(Error::DimMismatch {
                expected: dim_out,
                actual: bias.len(),
            });
        }
        if let Some(index) = weights.iter().chain(&bias).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            dim_in,
            dim_out,
            weights,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, w, vec![0.0; dim])
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    fn project_row(&self, x: &[f32]) -> Vec<f32> {
        let mut out: Vec<f64> = self.bias.iter().map(|&b| f64::from(b)).collect();
        for (i, &xi) in x.iter().enumerate() {
            let xi = f64::from(xi);
            for (o, &w) in out.iter_mut().zip(&self.weights[i * self.dim_out..(i + 1) * self.dim_out]) {
                *o += xi * f64::from(w);
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(io::HEADER_LEN + (self.weights.len() + self.dim_out) * 4);
        out.extend_from_slice(&io::PROJECTION_MAGIC);
        out.push(io::FORMAT_VERSION);
        out.extend_from_slice(&(self.dim_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim_out as u32).to_le_bytes());
        io::put_f32s(&mut out, &self.weights);
        io::put_f32s(&mut out, &self.bias);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (dim_in, dim_out, rest) = io::split_header(bytes, io::PROJECTION_MAGIC)?;
        let count = (dim_in as u64 + 1) * dim_out as u64;
        io::check_len(bytes.len() as u64, io::HEADER_LEN as u64 + count * 4)?;
        let mut values = io::get_f32s(rest);
        let bias = values.split_off(dim_in * dim_out);
        Self::new(dim_in, dim_out, values, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_bytes(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Rows of `x` mapped through `head`: `x W + b`.
pub fn project(head: &ProjectionHead, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if x.dim() != head.dim_in {
        return Err(Error::DimMismatch {
            expected: head.dim_in,
            actual: x.dim(),
        });
    }
    let rows = par::map_indexed(x.n(), |i| head.project_row(x.row(i)));
    EmbeddingMatrix::new(x.n(), head.dim_out, rows.concat())
}

/// MSE between rows `ids` of `a` and `b`.
pub fn mse(a: &EmbeddingMatrix, b: &EmbeddingMatrix, ids: &[usize]) -> f64 {
    let per_row: Vec<f64> = par::map_slice(ids, |&i| crate::types::squared_distance(a.row(i), b.row(i)));
    per_row.iter().sum::<f64>() / (ids.len() * a.dim()) as f64
}

/// Loss and gradient of the MSE objective for a flat parameter vector
/// `[W (dim_in x dim_out), b (dim_out)]`.
pub fn mse_loss_and_grad(
    params: &[f64],
    dim_in: usize,
    dim_out: usize,
    xs: &[&[f32]],
    targets: &[&[f32]],
) -> (f64, Vec<f64>) {
    let (w, b) = params.split_at(dim_in * dim_out);
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / (xs.len() * dim_out) as f64;
    let mut loss = 0.0;
    let mut resid = vec![0.0f64; dim_out];
    for (x, t) in xs.iter().zip(targets) {
        resid.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            let xi = f64::from(xi);
            for (r, wv) in resid.iter_mut().zip(&w[i * dim_out..(i + 1) * dim_out]) {
                *r += xi * wv;
            }
        }
        for (r, &tv) in resid.iter_mut().zip(t.iter()) {
            *r -= f64::from(tv);
            loss += *r * *r;
        }
        let (gw, gb) = grad.split_at_mut(dim_in * dim_out);
        for (g, r) in gb.iter_mut().zip(&resid) {
            *g += 2.0 * scale * r;
        }
        for (i, &xi) in x.iter().enumerate() {
            let xi = 2.0 * scale * f64::from(xi);
            for (g, r) in gw[i * dim_out..(i + 1) * dim_out].iter_mut().zip(&resid) {
                *g += xi * r;
            }
        }
    }
    (loss * scale, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub bias_correction: bool,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-4,
            batch_size: 32,
            bias_correction: false,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    /// Full training-split MSE after each epoch.
    pub train_mse_per_epoch: Vec<f64>,
    pub final_holdout_mse: f64,
    pub epochs: usize,
    /// Rows held out from training (ascending).
    pub holdout_ids: Vec<usize>,
}

/// Train rows and holdout rows for `n` samples.
fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::fork(seed, "distill-split"));
    let n_hold = if n < 2 {
        0
    } else {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    };
    let mut hold = order.split_off(n - n_hold);
    hold.sort_unstable();
    (order, hold)
}

/// Fit a projection from `student` to `teacher` with Adam on mini-batches,
/// starting from zero weights.
pub fn distill(
    student: &EmbeddingMatrix,
    teacher: &EmbeddingMatrix,
    config: &DistillConfig,
) -> Result<(ProjectionHead, DistillReport)> {
    if student.n() != teacher.n() {
        return Err(Error::DimMismatch {
            expected: student.n(),
            actual: teacher.n(),
        });
    }
    if config.batch_size == 0 || !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::InvalidArgument(
            "batch size must be >= 1 and holdout fraction in [0, 1)".into(),
        ));
    }
    let (din, dout) = (student.dim(), teacher.dim());
    let (mut train_ids, holdout_ids) = holdout_split(student.n(), config.holdout_fraction, config.seed);
    let mut params = vec![0.0f64; (din + 1) * dout];
    let mut adam = AdamState::new(params.len(), AdamConfig::new(config.lr, config.bias_correction));

    let mut train_mse = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        train_ids.shuffle(&mut rng::fork_indexed(config.seed, "distill-epoch", epoch as u64));
        for batch in train_ids.chunks(config.batch_size) {
            let xs: Vec<&[f32]> = batch.iter().map(|&i| student.row(i)).collect();
            let ts: Vec<&[f32]> = batch.iter().map(|&i| teacher.row(i)).collect();
            let (_, grad) = mse_loss_and_grad(&params, din, dout, &xs, &ts);
            adam_step(&mut adam, &mut params, &grad).map_err(|_| Error::Diverged { epoch })?;
        }
        let xs: Vec<&[f32]> = train_ids.iter().map(|&i| student.row(i)).collect();
        let ts: Vec<&[f32]> = train_ids.iter().map(|&i| teacher.row(i)).collect();
        let loss = mse_loss_and_grad(&params, din, dout, &xs, &ts).0;
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        train_mse.push(loss);
        log::debug!("distill epoch {epoch}: train mse {loss:.6e}");
    }

    let (w, b) = params.split_at(din * dout);
    let head = ProjectionHead::new(
        din,
        dout,
        w.iter().map(|&v| v as f32).collect(),
        b.iter().map(|&v| v as f32).collect(),
    )
    .map_err(|_| Error::Diverged { epoch: config.epochs })?;
    let eval_ids = if holdout_ids.is_empty() { &train_ids } else { &holdout_ids };
    let projected = project(&head, &student.select_rows(eval_ids)?)?;
    let target = teacher.select_rows(eval_ids)?;
    let final_holdout_mse = mse(&projected, &target, &(0..eval_ids.len()).collect::<Vec<_>>());

    Ok((
        head,
        DistillReport {
            train_mse_per_epoch: train_mse,
            final_holdout_mse,
            epochs: config.epochs,
            holdout_ids,
        },
    ))
}

/// True when every epoch's loss is at most `1 + slack` times the previous.
pub fn loss_mostly_decreasing(losses: &[f64], slack: f64) -> bool {
    losses.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}
