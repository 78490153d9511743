//! `experiment`: the whole pipeline driven by one TOML file.
//!
//! ```toml
//! student = "student.aleb"
//! teacher = "teacher.aleb"    # optional; without it the student is used as is
//! labels = "labels.jsonl"
//! out = "results"
//! seed = 0
//! k = 150                     # optional, default round(train size / 10)
//! strategies = ["random", "hard_mining", "dropout_perceptron", "dal"]
//! seeds = 3
//! iterations = 5
//! batch_size = 10
//! init_pos = 5
//! init_neg = 5
//! init_pool = "medoids"       # or "full"
//! trials = 1000
//! distill_epochs = 10
//! distill_lr = 1e-4
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use coldstart_al::alloop::{self, AlOptions, InitPool};
use coldstart_al::distill::{self, DistillConfig};
use coldstart_al::initsample::{EffortConfig, PoolKind, DEFAULT_TRIALS};
use coldstart_al::io;
use coldstart_al::{AlRunConfig, Dataset, Error, Result, Split, Strategy};
use serde::{Deserialize, Serialize};

use crate::commands::{self, EffortJob};
use crate::ExperimentArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub student: PathBuf,
    #[serde(default)]
    pub teacher: Option<PathBuf>,
    pub labels: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_init")]
    pub init_pos: usize,
    #[serde(default = "default_init")]
    pub init_neg: usize,
    #[serde(default = "default_init_pool")]
    pub init_pool: PoolKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default = "default_distill_epochs")]
    pub distill_epochs: usize,
    #[serde(default = "default_distill_lr")]
    pub distill_lr: f64,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_seeds() -> u64 {
    3
}
fn default_iterations() -> usize {
    5
}
fn default_batch() -> usize {
    10
}
fn default_init() -> usize {
    5
}
fn default_init_pool() -> PoolKind {
    PoolKind::Medoids
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_distill_epochs() -> usize {
    10
}
fn default_distill_lr() -> f64 {
    1e-4
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {}", e.message())))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.student);
        fix(&mut self.labels);
        if let Some(t) = &mut self.teacher {
            fix(t);
        }
        if let Some(o) = &mut self.out {
            fix(o);
        }
    }

    /// Every input must exist before any work starts.
    fn check_inputs(&self) -> Result<()> {
        let inputs = [Some(&self.student), self.teacher.as_ref(), Some(&self.labels)];
        for p in inputs.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        if self.strategies.is_empty() || self.seeds == 0 {
            return Err(Error::InvalidArgument("need at least one strategy and one seed".into()));
        }
        Ok(())
    }
}

pub fn run(args: &ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.resolve(args.config.parent().unwrap_or(Path::new(".")));
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::InvalidArgument("no output directory: set `out` or pass --out".into()))?;
    cfg.check_inputs()?;
    let run_config = AlRunConfig {
        iterations: cfg.iterations,
        batch_size: cfg.batch_size,
        init_pos: cfg.init_pos,
        init_neg: cfg.init_neg,
        seeds: (0..cfg.seeds).map(|i| cfg.seed + i).collect(),
        strategy: cfg.strategies[0],
    };
    run_config.validate()?;

    let dataset = commands::load_dataset(&cfg.student, &cfg.labels)?;
    let categories = commands::pick_categories(dataset.records(), &cfg.categories)?;
    let train_ids = dataset.ids_in(Split::Train);

    let projected = match &cfg.teacher {
        Some(teacher_path) => {
            let teacher = io::read_embeddings(teacher_path)?;
            let config = DistillConfig {
                epochs: cfg.distill_epochs,
                lr: cfg.distill_lr,
                seed: cfg.seed,
                ..DistillConfig::default()
            };
            let (head, report) = distill::distill(&dataset.embeddings, &teacher, &config)?;
            head.save(out.join("projection.alpj"))?;
            io::write_json(out.join("distill_report.json"), &report)?;
            println!("distill: holdout mse {:.6e}", report.final_holdout_mse);
            alloop::project_dataset(&dataset, &head)?
        }
        None => dataset.clone(),
    };

    let normalized = projected.embeddings.normalized()?;
    let clustered = commands::cluster_rows(
        &normalized,
        &train_ids,
        cfg.k,
        cfg.seed,
        coldstart_al::cluster::DEFAULT_MAX_ITERS,
        coldstart_al::cluster::DEFAULT_TOL,
    )?;
    io::write_json(out.join("clusters.json"), &clustered.file)?;
    commands::print_clusters(&clustered);

    let mut dunn = serde_json::Map::new();
    let d = commands::dunn_of(&normalized, &clustered.file)?;
    commands::print_dunn("projected", &d);
    dunn.insert("projected".into(), serde_json::to_value(&d)?);
    if cfg.teacher.is_some() {
        let student_norm = dataset.embeddings.normalized()?;
        let student_clusters = commands::cluster_rows(
            &student_norm,
            &train_ids,
            Some(clustered.file.k),
            cfg.seed,
            coldstart_al::cluster::DEFAULT_MAX_ITERS,
            coldstart_al::cluster::DEFAULT_TOL,
        )?;
        let d = commands::dunn_of(&student_norm, &student_clusters.file)?;
        commands::print_dunn("student", &d);
        dunn.insert("student".into(), serde_json::to_value(&d)?);
    }
    io::write_json(out.join("dunn.json"), &dunn)?;

    let medoids = clustered.file.medoid_ids.clone();
    let job = EffortJob {
        records: projected.records(),
        full_pool: train_ids,
        medoids: Some(medoids.clone()),
        kinds: vec![PoolKind::Full, PoolKind::Medoids],
        categories: categories.clone(),
        config: EffortConfig {
            trials: cfg.trials,
            init_pos: cfg.init_pos,
            init_neg: cfg.init_neg,
            seed: cfg.seed,
        },
    };
    let (effort, table) = commands::simulate(&job)?;
    io::write_json(out.join("effort.json"), &effort)?;
    print!("{table}");

    let options = AlOptions {
        init_pool: match cfg.init_pool {
            PoolKind::Full => InitPool::Full,
            PoolKind::Medoids => InitPool::Medoids(medoids),
        },
        ..AlOptions::default()
    };
    let keys = commands::run_keys(&cfg.strategies, &categories, &run_config.seeds);
    let reports = run_all(&projected, &keys, &run_config, &options, &out)?;
    commands::print_finals(&reports);
    let csv = commands::write_report(&reports, &out)?;
    print!("{csv}");
    Ok(())
}

fn run_all(
    dataset: &Dataset,
    keys: &[alloop::RunKey],
    config: &AlRunConfig,
    options: &AlOptions,
    out: &Path,
) -> Result<Vec<alloop::RunReport>> {
    commands::run_reports(dataset, keys, config, options, &out.join("runs"))
}
