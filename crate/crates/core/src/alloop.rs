//! The active learning loop and its evaluation.
//!
//! [`run_al`] runs one (category, strategy, seed) experiment: draw the
//! initial labeled set, then repeatedly train a fresh classifier, evaluate
//! it on dev and test, and label the batch the strategy asks for.
//! [`aggregate`] turns many runs into per-strategy F1 curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquire::{self, DalConfig, DEFAULT_MC_PASSES};
use crate::distill::{self, ProjectionHead};
use crate::error::{Error, Result};
use crate::initsample;
use crate::model::{self, TrainConfig};
use crate::par;
use crate::rng;
use crate::types::{AlRunConfig, Dataset, Pools, Split, Strategy};

/// Precision, recall and F1 of the positive class. Precision is 0 when
/// nothing is predicted positive and F1 is 0 when both are 0.
pub fn f1_binary(predicted: &[bool], truth: &[bool]) -> Result<(f64, f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::DimMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fneg);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based; implied by position in a report file.
    #[serde(skip)]
    pub iteration: usize,
    pub n_labeled: usize,
    pub f1_dev: f64,
    pub f1_test: f64,
    /// Batch chosen after this evaluation; empty on the last iteration.
    pub selected_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub category: String,
    pub iterations: Vec<IterationRecord>,
}

impl RunReport {
    /// Conventional file name inside a runs directory.
    pub fn file_name(&self) -> String {
        let safe: String = self
            .category
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{}__{}__seed{}.json", self.strategy, safe, self.seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut report: RunReport = crate::io::read_json(path)?;
        for (i, rec) in report.iterations.iter_mut().enumerate() {
            rec.iteration = i + 1;
        }
        Ok(report)
    }
}

/// Where the initial labeled set is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPool {
    /// Every train-split sample.
    Full,
    /// Cluster medoids (sample ids).
    Medoids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlOptions {
    pub init_pool: InitPool,
    pub train: TrainConfig,
    pub dal: DalConfig,
    pub mc_passes: usize,
}

impl Default for AlOptions {
    fn default() -> Self {
        Self {
            init_pool: InitPool::Full,
            train: TrainConfig::default(),
            dal: DalConfig::default(),
            mc_passes: DEFAULT_MC_PASSES,
        }
    }
}

/// Dataset whose embeddings are replaced by their projection through `head`.
pub fn project_dataset(dataset: &Dataset, head: &ProjectionHead) -> Result<Dataset> {
    dataset.with_embeddings(distill::project(head, &dataset.embeddings)?)
}

fn f1_on(head: &model::ClassifierHead, dataset: &Dataset, set: &[(usize, bool)]) -> Result<f64> {
    let ids: Vec<usize> = set.iter().map(|&(id, _)| id).collect();
    let preds: Vec<bool> = head
        .predict(&dataset.embeddings, &ids)?
        .into_iter()
        .map(|p| p >= 0.5)
        .collect();
    let truth: Vec<bool> = set.iter().map(|&(_, y)| y).collect();
    Ok(f1_binary(&preds, &truth)?.2)
}

/// One active learning run over `dataset`, whose embeddings must already be
/// in the space the classifier should see (see [`project_dataset`]).
pub fn run_al(
    dataset: &Dataset,
    category: &str,
    config: &AlRunConfig,
    options: &AlOptions,
    seed: u64,
) -> Result<RunReport> {
    config.validate()?;
    let task = dataset.task(category);
    let oracle = |id: usize| task.label(id);
    let with_labels =
        |ids: Vec<usize>| -> Vec<(usize, bool)> { ids.into_iter().map(|id| (id, oracle(id))).collect() };
    let train_ids = dataset.ids_in(Split::Train);
    let dev = with_labels(dataset.ids_in(Split::Dev));
    let test = with_labels(dataset.ids_in(Split::Test));

    let init_pool = match &options.init_pool {
        InitPool::Full => train_ids.clone(),
        InitPool::Medoids(ids) => ids.clone(),
    };
    let mut init_rng = rng::fork(seed, &format!("init:{category}"));
    let init = initsample::sample_initial(&init_pool, oracle, config.init_pos, config.init_neg, &mut init_rng)?;
    if !init.succeeded {
        let positives = init.labeled.iter().filter(|&&(_, y)| y).count();
        return Err(Error::InitialSampling {
            actions: init.actions,
            positives,
            negatives: init.labeled.len() - positives,
        });
    }

    let mut pools = Pools::new(train_ids);
    pools.label_all(init.labeled)?;

    let mut records = Vec::with_capacity(config.iterations);
    for i in 1..=config.iterations {
        let labeled: Vec<(usize, bool)> = pools.labeled().iter().map(|(&id, &y)| (id, y)).collect();
        let (head, _) = model::train(
            &dataset.embeddings,
            &labeled,
            &dev,
            &options.train,
            rng::derive_seed(seed, &format!("train:{category}"), i as u64),
        )?;
        let mut record = IterationRecord {
            iteration: i,
            n_labeled: labeled.len(),
            f1_dev: f1_on(&head, dataset, &dev)?,
            f1_test: f1_on(&head, dataset, &test)?,
            selected_ids: Vec::new(),
        };
        let last = i == config.iterations || pools.unlabeled().is_empty();
        if !last {
            let select_seed = rng::derive_seed(seed, &format!("select:{category}"), i as u64);
            let emb = &dataset.embeddings;
            let batch = config.batch_size;
            let selection = match config.strategy {
                Strategy::Random => acquire::select_random(&pools, batch, select_seed)?,
                Strategy::HardMining => acquire::select_hard_mining(&head, emb, &pools, batch)?,
                Strategy::DropoutPerceptron => acquire::select_dropout_perceptron(
                    &head,
                    emb,
                    &pools,
                    batch,
                    options.mc_passes,
                    select_seed,
                )?,
                Strategy::Dal => acquire::select_dal(emb, &pools, batch, &options.dal, select_seed)?,
            };
            pools.label_all(selection.ids.iter().map(|&id| (id, oracle(id))))?;
            record.selected_ids = selection.ids;
        }
        records.push(record);
        if last {
            break;
        }
    }

    Ok(RunReport {
        strategy: config.strategy,
        seed,
        category: category.to_string(),
        iterations: records,
    })
}

/// A (category, seed) pair to run under a fixed strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunKey {
    pub strategy: Strategy,
    pub category: String,
    pub seed: u64,
}

/// Run every key in parallel. Results come back in key order.
pub fn run_many(
    dataset: &Dataset,
    keys: &[RunKey],
    config: &AlRunConfig,
    options: &AlOptions,
) -> Result<Vec<RunReport>> {
    par::map_slice(keys, |key| {
        let cfg = AlRunConfig {
            strategy: key.strategy,
            ..config.clone()
        };
        run_al(dataset, &key.category, &cfg, options, key.seed)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_labeled: usize,
    pub mean_f1: f64,
    /// Category-averaged test F1 for each seed, in ascending seed order.
    pub per_seed: Vec<f64>,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub strategy: Strategy,
    pub points: Vec<CurvePoint>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Test-F1 curves per strategy: at each grid point, the mean over seeds of
/// the mean over categories. Input order does not matter.
pub fn aggregate(runs: &[RunReport]) -> Result<Vec<Curve>> {
    // strategy -> seed -> category -> run
    let mut grouped: BTreeMap<Strategy, BTreeMap<u64, BTreeMap<&str, &RunReport>>> = BTreeMap::new();
    for run in runs {
        let slot = grouped
            .entry(run.strategy)
            .or_default()
            .entry(run.seed)
            .or_default();
        if slot.insert(run.category.as_str(), run).is_some() {
            return Err(Error::MismatchedGrid(format!(
                "duplicate run for {} / {} / seed {}",
                run.strategy, run.category, run.seed
            )));
        }
    }

    let mut curves = Vec::with_capacity(grouped.len());
    for (strategy, by_seed) in grouped {
        let mut grid: Option<Vec<usize>> = None;
        for run in by_seed.values().flat_map(|cats| cats.values()) {
            let this: Vec<usize> = run.iterations.iter().map(|r| r.n_labeled).collect();
            match &grid {
                None => grid = Some(this),
                Some(g) if *g != this => {
                    return Err(Error::MismatchedGrid(format!(
                        "{strategy}: {} / seed {} has grid {this:?}, expected {g:?}",
                        run.category, run.seed
                    )))
                }
                Some(_) => {}
            }
        }
        let grid = grid.unwrap_or_default();
        let points = grid
            .iter()
            .enumerate()
            .map(|(j, &n_labeled)| {
                let per_seed: Vec<f64> = by_seed
                    .values()
                    .map(|cats| {
                        let f1s: Vec<f64> = cats.values().map(|r| r.iterations[j].f1_test).collect();
                        mean(&f1s)
                    })
                    .collect();
                CurvePoint {
                    n_labeled,
                    mean_f1: mean(&per_seed),
                    std_f1: sample_std(&per_seed),
                    per_seed,
                }
            })
            .collect();
        curves.push(Curve { strategy, points });
    }
    Ok(curves)
}

pub const CSV_HEADER: &str = "strategy,n_labeled,mean_f1,std_f1";

/// CSV rendering of [`aggregate`] output. Floats use the shortest
/// representation that parses back to the same value.
pub fn curves_csv(curves: &[Curve]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for curve in curves {
        for p in &curve.points {
            let _ = writeln!(out, "{},{},{},{}", curve.strategy, p.n_labeled, p.mean_f1, p.std_f1);
        }
    }
    out
}
