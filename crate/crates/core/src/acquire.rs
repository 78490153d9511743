//! Acquisition strategies: given the current model and pools, choose the
//! next batch of unlabeled samples to annotate.
//!
//! Every strategy scores each unlabeled sample (higher = pick first) and
//! takes the top `batch`, ordering by descending score and then ascending
//! sample id.

use rand::{Rng, RngCore};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ClassifierHead, TrainConfig};
use crate::par;
use crate::rng;
use crate::types::{EmbeddingMatrix, Pools};

pub const DEFAULT_MC_PASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

struct Candidate {
    id: usize,
    score: f64,
    tie: f64,
}

fn top(mut cands: Vec<Candidate>, batch: usize) -> Selection {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.tie.total_cmp(&a.tie))
            .then(a.id.cmp(&b.id))
    });
    cands.truncate(batch);
    Selection {
        ids: cands.iter().map(|c| c.id).collect(),
        scores: cands.iter().map(|c| c.score).collect(),
    }
}

fn unlabeled(pools: &Pools) -> Result<Vec<usize>> {
    if pools.unlabeled().is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(pools.unlabeled_ids())
}

/// Uniform sample without replacement: each unlabeled id gets a uniform
/// draw from the `(seed, "acquire-random")` stream in ascending id order.
pub fn select_random(pools: &Pools, batch: usize, seed: u64) -> Result<Selection> {
    let ids = unlabeled(pools)?;
    let mut rng = rng::fork(seed, "acquire-random");
    let cands = ids
        .into_iter()
        .map(|id| Candidate {
            id,
            score: rng.random::<f64>(),
            tie: 0.0,
        })
        .collect();
    Ok(top(cands, batch))
}

/// Closest eval-mode probability to 0.5 first.
pub fn select_hard_mining(
    head: &ClassifierHead,
    embeddings: &EmbeddingMatrix,
    pools: &Pools,
    batch: usize,
) -> Result<Selection> {
    let ids = unlabeled(pools)?;
    let probs = head.predict(embeddings, &ids)?;
    let cands = ids
        .into_iter()
        .zip(probs)
        .map(|(id, p)| Candidate {
            id,
            score: -(p - 0.5).abs(),
            tie: 0.0,
        })
        .collect();
    Ok(top(cands, batch))
}

/// Mean and population standard deviation, with the mean computed as
/// `first + mean(deviation from first)` so identical passes give back the
/// exact value.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let first = values[0];
    let n = values.len() as f64;
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// MC-dropout uncertainty: the mean of `passes` dropout probabilities
/// closest to 0.5 first, ties broken by the larger spread across passes.
///
/// Pass seeds for sample `id` come from sub-stream `id` of
/// `(seed, "mc-dropout")`.
pub fn select_dropout_perceptron(
    head: &ClassifierHead,
    embeddings: &EmbeddingMatrix,
    pools: &Pools,
    batch: usize,
    passes: usize,
    seed: u64,
) -> Result<Selection> {
    if passes < 1 {
        return Err(Error::InvalidArgument("need at least one dropout pass".into()));
    }
    if embeddings.dim() != head.input_dim() {
        return Err(Error::DimMismatch {
            expected: head.input_dim(),
            actual: embeddings.dim(),
        });
    }
    let ids = unlabeled(pools)?;
    let cands = par::map_slice(&ids, |&id| {
        let mut stream = rng::fork_indexed(seed, "mc-dropout", id as u64);
        let seeds: Vec<u64> = (0..passes).map(|_| stream.next_u64()).collect();
        let (mean, std) = mean_std(&head.dropout_passes(embeddings.row(id), &seeds));
        Candidate {
            id,
            score: -(mean - 0.5).abs(),
            tie: std,
        }
    });
    Ok(top(cands, batch))
}

/// Per-sample pass seeds used by [`select_dropout_perceptron`].
pub fn dropout_pass_seeds(seed: u64, id: usize, passes: usize) -> Vec<u64> {
    let mut stream = rng::fork_indexed(seed, "mc-dropout", id as u64);
    (0..passes).map(|_| stream.next_u64()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalConfig {
    pub train: TrainConfig,
    /// Share of each pool held out for the discriminator's early stopping.
    pub holdout_fraction: f64,
}

impl Default for DalConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                max_epochs: 30,
                patience: 5,
                ..TrainConfig::default()
            },
            holdout_fraction: 0.2,
        }
    }
}

/// Discriminative selection: train a labeled-vs-unlabeled classifier and
/// pick the unlabeled samples it most confidently calls unlabeled.
pub fn select_dal(
    embeddings: &EmbeddingMatrix,
    pools: &Pools,
    batch: usize,
    config: &DalConfig,
    seed: u64,
) -> Result<Selection> {
    let unl = unlabeled(pools)?;
    let lab = pools.labeled_ids();
    if lab.is_empty() {
        return Err(Error::DegenerateTraining(
            "discriminator needs at least one labeled sample".into(),
        ));
    }
    let mut split_rng = rng::fork(seed, "dal-split");
    let mut train_set = Vec::with_capacity(lab.len() + unl.len());
    let mut holdout = Vec::new();
    for (group, is_unlabeled) in [(&lab, false), (&unl, true)] {
        let mut order = group.clone();
        order.shuffle(&mut split_rng);
        let n_hold = ((order.len() as f64 * config.holdout_fraction).round() as usize)
            .min(order.len() - 1);
        let (hold, fit) = order.split_at(n_hold);
        holdout.extend(hold.iter().map(|&id| (id, is_unlabeled)));
        train_set.extend(fit.iter().map(|&id| (id, is_unlabeled)));
    }
    let (disc, report) = model::train(
        embeddings,
        &train_set,
        &holdout,
        &config.train,
        rng::derive_seed(seed, "dal-train", 0),
    )?;
    log::debug!(
        "dal discriminator: {} epochs, holdout macro-F1 {:.3}",
        report.epochs_run,
        report.best_dev_f1
    );
    let probs = disc.predict(embeddings, &unl)?;
    let cands = unl
        .into_iter()
        .zip(probs)
        .map(|(id, p)| Candidate { id, score: p, tie: 0.0 })
        .collect();
    Ok(top(cands, batch))
}
