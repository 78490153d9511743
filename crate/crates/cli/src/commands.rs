use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use coldstart_al::alloop::{self, AlOptions, InitPool, RunKey, RunReport};
use coldstart_al::cluster::{self, DunnSummary};
use coldstart_al::distill::{self, DistillConfig, ProjectionHead};
use coldstart_al::initsample::{self, EffortConfig, EffortRow, EffortStats, PoolKind};
use coldstart_al::io::{self, ClustersFile};
use coldstart_al::model::TrainConfig;
use coldstart_al::synth::{self, ScrambleSpec, SyntheticSpec};
use coldstart_al::{par, AlRunConfig, Dataset, EmbeddingMatrix, Error, Result, SampleRecord, Split};
use serde::Serialize;

use crate::*;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => {
            let jobs = a.common.jobs;
            par::with_threads(jobs, || gen_synthetic(&a))
        }
        Command::Distill(a) => par::with_threads(a.common.jobs, || cmd_distill(&a)),
        Command::Cluster(a) => par::with_threads(a.common.jobs, || cmd_cluster(&a)),
        Command::Dunn(a) => par::with_threads(a.common.jobs, || cmd_dunn(&a)),
        Command::SimulateInitial(a) => par::with_threads(a.common.jobs, || cmd_simulate(&a)),
        Command::RunAl(a) => par::with_threads(a.common.jobs, || cmd_run_al(&a)),
        Command::Report(a) => cmd_report(&a),
        Command::Experiment(a) => par::with_threads(a.jobs, || experiment::run(&a)),
    }
}

pub(crate) fn load_dataset(embeddings: &Path, labels: &Path) -> Result<Dataset> {
    let emb = io::read_embeddings(embeddings)?;
    let records = io::read_labels_for(labels, emb.n())?;
    Dataset::new(emb, records)
}

fn gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: a.classes,
        n_samples: a.n,
        dim: a.dim,
        class_prevalences: a.prevalences.clone(),
        center_separation: a.separation,
        noise_sigma: a.sigma,
        seed: a.common.seed,
    };
    spec.validate()?;
    let scramble = a
        .student_dim
        .map(|student_dim| {
            if student_dim < a.dim {
                return Err(Error::InvalidArgument(format!(
                    "--student-dim {student_dim} is smaller than --dim {}",
                    a.dim
                )));
            }
            Ok(ScrambleSpec {
                student_dim,
                signal_scale: a.student_scale,
                nuisance_sigma: a.nuisance_sigma,
                seed: a.common.seed,
            })
        })
        .transpose()?;

    let data = synth::generate_synthetic(&spec)?;
    let student = scramble
        .map(|s| synth::scramble(&data.embeddings, &s))
        .transpose()?;

    let out = &a.common.out;
    io::write_embeddings(out.join("embeddings.aleb"), &data.embeddings)?;
    io::write_labels(out.join("labels.jsonl"), &data.records)?;
    if let Some(student) = &student {
        io::write_embeddings(out.join("student.aleb"), student)?;
    }

    let mut counts = vec![0usize; a.classes];
    for &c in &data.classes {
        counts[c] += 1;
    }
    let minority = (0..a.classes).min_by_key(|&c| (counts[c], c)).unwrap_or(0);
    println!("wrote {} samples of dim {} to {}", a.n, a.dim, out.display());
    for (c, n) in counts.iter().enumerate() {
        println!("  {:<10} {n}", synth::class_name(c));
    }
    println!("minority: {} {}", synth::class_name(minority), counts[minority]);
    Ok(())
}

fn cmd_distill(a: &DistillArgs) -> Result<()> {
    let student = io::read_embeddings(&a.student)?;
    let teacher = io::read_embeddings(&a.teacher)?;
    let config = DistillConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch,
        bias_correction: a.bias_correction,
        holdout_fraction: a.holdout,
        seed: a.common.seed,
    };
    let (head, report) = distill::distill(&student, &teacher, &config)?;
    let projected = distill::project(&head, &student)?;

    let out = &a.common.out;
    head.save(out.join("projection.alpj"))?;
    io::write_embeddings(out.join("projected.aleb"), &projected)?;
    io::write_json(out.join("distill_report.json"), &report)?;

    println!("epoch  train_mse");
    for (i, m) in report.train_mse_per_epoch.iter().enumerate() {
        println!("{:>5}  {m:.6e}", i + 1);
    }
    println!("holdout mse {:.6e} over {} rows", report.final_holdout_mse, report.holdout_ids.len());
    Ok(())
}

pub(crate) struct Clustered {
    pub file: ClustersFile,
    pub sizes: Vec<usize>,
    pub iterations: usize,
}

pub(crate) fn cluster_rows(
    normalized: &EmbeddingMatrix,
    ids: &[usize],
    k: Option<usize>,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Clustered> {
    let k = k.unwrap_or_else(|| cluster::default_k(ids.len()));
    let result = cluster::kmeans_ids(normalized, ids, k, seed, max_iters, tol)?;
    Ok(Clustered {
        file: result.to_file(normalized.n(), seed),
        sizes: result.cluster_sizes(),
        iterations: result.inertia_trace.len(),
    })
}

pub(crate) fn print_clusters(c: &Clustered) {
    let min = c.sizes.iter().min().copied().unwrap_or(0);
    let max = c.sizes.iter().max().copied().unwrap_or(0);
    println!(
        "k {}  inertia {:.6}  lloyd passes {}  cluster sizes {min}..{max}",
        c.file.k, c.file.inertia, c.iterations
    );
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let emb = io::read_embeddings(&a.embeddings)?.normalized()?;
    let ids: Vec<usize> = if a.all_rows {
        (0..emb.n()).collect()
    } else {
        let labels = a.labels.as_ref().expect("clap enforces --labels");
        let records = io::read_labels_for(labels, emb.n())?;
        ids_in(&records, Split::Train)
    };
    let c = cluster_rows(&emb, &ids, a.k, a.common.seed, a.max_iters, a.tol)?;
    io::write_json(a.common.out.join("clusters.json"), &c.file)?;
    print_clusters(&c);
    Ok(())
}

#[derive(Debug, Serialize)]
pub(crate) struct DunnOutput {
    pub k: usize,
    pub clustered_rows: usize,
    /// `null` when every cluster is a singleton.
    pub global: Option<f64>,
    pub per_cluster: DunnSummary,
}

pub(crate) fn dunn_of(normalized: &EmbeddingMatrix, clusters: &ClustersFile) -> Result<DunnOutput> {
    if clusters.assignments.len() != normalized.n() {
        return Err(Error::DimMismatch {
            expected: normalized.n(),
            actual: clusters.assignments.len(),
        });
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (id, &a) in clusters.assignments.iter().enumerate() {
        if a >= 0 {
            ids.push(id);
            labels.push(a as usize);
        }
    }
    let stats = cluster::dunn(&normalized.select_rows(&ids)?, &labels)?;
    Ok(DunnOutput {
        k: stats.labels.len(),
        clustered_rows: ids.len(),
        global: stats.global.is_finite().then_some(stats.global),
        per_cluster: stats.summary(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub(crate) fn print_dunn(name: &str, d: &DunnOutput) {
    let s = &d.per_cluster;
    println!(
        "{name:<10} k {:>5}  global {:>8}  per-cluster median {:>8}  mean {:>8}  singletons {}",
        d.k,
        fmt_opt(d.global),
        fmt_opt(s.median),
        fmt_opt(s.mean),
        s.singletons
    );
}

fn cmd_dunn(a: &DunnArgs) -> Result<()> {
    let emb = io::read_embeddings(&a.embeddings)?.normalized()?;
    let clusters: ClustersFile = io::read_json(&a.clusters)?;
    let d = dunn_of(&emb, &clusters)?;
    io::write_json(a.common.out.join("dunn.json"), &d)?;
    print_dunn("dunn", &d);
    Ok(())
}

pub(crate) fn ids_in(records: &[SampleRecord], split: Split) -> Vec<usize> {
    let mut ids: Vec<usize> = records.iter().filter(|r| r.split == split).map(|r| r.id).collect();
    ids.sort_unstable();
    ids
}

fn all_categories(records: &[SampleRecord]) -> BTreeSet<String> {
    records.iter().flat_map(|r| r.categories.iter().cloned()).collect()
}

pub(crate) fn pick_categories(records: &[SampleRecord], wanted: &[String]) -> Result<Vec<String>> {
    let all = all_categories(records);
    if wanted.is_empty() {
        return Ok(all.into_iter().collect());
    }
    for w in wanted {
        if !all.contains(w) {
            return Err(Error::InvalidArgument(format!("unknown category {w:?}")));
        }
    }
    Ok(wanted.to_vec())
}

#[derive(Debug, Serialize)]
pub(crate) struct EffortCategory {
    pub category: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<EffortStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medoids: Option<EffortStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

#[derive(Debug, Serialize)]
pub(crate) struct EffortOutput {
    pub seed: u64,
    pub trials: usize,
    pub init_pos: usize,
    pub init_neg: usize,
    pub categories: Vec<EffortCategory>,
}

pub(crate) struct EffortJob<'a> {
    pub records: &'a [SampleRecord],
    pub full_pool: Vec<usize>,
    pub medoids: Option<Vec<usize>>,
    pub kinds: Vec<PoolKind>,
    pub categories: Vec<String>,
    pub config: EffortConfig,
}

pub(crate) fn simulate(job: &EffortJob) -> Result<(EffortOutput, String)> {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for category in &job.categories {
        let task = coldstart_al::BinaryTask::from_records(category, job.records);
        let oracle = |id: usize| task.label(id);
        let mut entry = EffortCategory {
            category: category.clone(),
            full: None,
            medoids: None,
            gain: None,
        };
        for &kind in &job.kinds {
            let pool = match kind {
                PoolKind::Full => &job.full_pool,
                PoolKind::Medoids => job.medoids.as_ref().expect("checked by caller"),
            };
            let stats = initsample::simulate_effort(pool, oracle, kind, &job.config)?;
            match kind {
                PoolKind::Full => entry.full = Some(stats),
                PoolKind::Medoids => entry.medoids = Some(stats),
            }
        }
        if let (Some(f), Some(m)) = (&entry.full, &entry.medoids) {
            let row = EffortRow::new(category.clone(), f.clone(), m.clone());
            entry.gain = row.gain;
            rows.push(row);
        }
        out.push(entry);
    }

    let table = if rows.len() == out.len() {
        initsample::effort_table(&rows)
    } else {
        let mut t = String::new();
        let _ = writeln!(t, "{:<24} {:>6} {:>10} {:>10} {:>9}", "category", "pool", "median", "90th%tile", "success");
        for e in &out {
            for s in e.full.iter().chain(&e.medoids) {
                let _ = writeln!(
                    t,
                    "{:<24} {:>6} {:>10} {:>10} {:>9}",
                    e.category,
                    if s.pool_kind == PoolKind::Full { "full" } else { "medoid" },
                    s.median.map_or("n/a".into(), |v| format!("{v:.1}")),
                    s.p90.map_or("n/a".into(), |v| format!("{v:.1}")),
                    format!("{}/{}", s.success_count, s.trials)
                );
            }
        }
        t
    };

    Ok((
        EffortOutput {
            seed: job.config.seed,
            trials: job.config.trials,
            init_pos: job.config.init_pos,
            init_neg: job.config.init_neg,
            categories: out,
        },
        table,
    ))
}

fn read_medoids(path: &Path) -> Result<Vec<usize>> {
    let clusters: ClustersFile = io::read_json(path)?;
    Ok(clusters.medoid_ids)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let kinds = a.pool.kinds();
    let medoids = match (&a.clusters, kinds.contains(&PoolKind::Medoids)) {
        (Some(p), true) => Some(read_medoids(p)?),
        (None, true) => {
            return Err(Error::InvalidArgument(
                "--clusters is required for the medoid pool".into(),
            ))
        }
        (_, false) => None,
    };
    let records = io::read_labels(&a.labels)?;
    let job = EffortJob {
        full_pool: ids_in(&records, a.full_pool_split),
        medoids,
        kinds,
        categories: pick_categories(&records, &a.categories)?,
        config: EffortConfig {
            trials: a.trials,
            init_pos: a.init_pos,
            init_neg: a.init_neg,
            seed: a.common.seed,
        },
        records: &records,
    };
    let (output, table) = simulate(&job)?;
    io::write_json(a.common.out.join("effort.json"), &output)?;
    print!("{table}");
    Ok(())
}

pub(crate) fn run_reports(
    dataset: &Dataset,
    keys: &[RunKey],
    config: &AlRunConfig,
    options: &AlOptions,
    runs_dir: &Path,
) -> Result<Vec<RunReport>> {
    let reports = alloop::run_many(dataset, keys, config, options)?;
    for r in &reports {
        r.save(runs_dir.join(r.file_name()))?;
    }
    Ok(reports)
}

pub(crate) fn print_finals(reports: &[RunReport]) {
    println!("{:<20} {:>6} {:>10} {:>14}", "strategy", "runs", "n_labeled", "mean final F1");
    for st in coldstart_al::Strategy::ALL {
        let finals: Vec<&alloop::IterationRecord> = reports
            .iter()
            .filter(|r| r.strategy == st)
            .filter_map(|r| r.iterations.last())
            .collect();
        if finals.is_empty() {
            continue;
        }
        let mean = finals.iter().map(|r| r.f1_test).sum::<f64>() / finals.len() as f64;
        println!("{:<20} {:>6} {:>10} {:>14.4}", st, finals.len(), finals[0].n_labeled, mean);
    }
}

pub(crate) fn run_keys(
    strategies: &[coldstart_al::Strategy],
    categories: &[String],
    seeds: &[u64],
) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &strategy in strategies {
        for category in categories {
            for &seed in seeds {
                keys.push(RunKey {
                    strategy,
                    category: category.clone(),
                    seed,
                });
            }
        }
    }
    keys
}

fn cmd_run_al(a: &RunAlArgs) -> Result<()> {
    let mut dataset = load_dataset(&a.embeddings, &a.labels)?;
    if let Some(p) = &a.projection {
        dataset = alloop::project_dataset(&dataset, &ProjectionHead::load(p)?)?;
    }
    let init_pool = match &a.clusters {
        Some(p) => InitPool::Medoids(read_medoids(p)?),
        None => InitPool::Full,
    };
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.common.seed + i).collect();
    let config = AlRunConfig {
        iterations: a.iterations,
        batch_size: a.batch,
        init_pos: a.init_pos,
        init_neg: a.init_neg,
        seeds: seeds.clone(),
        strategy: a.strategy.first().copied().unwrap_or(coldstart_al::Strategy::Random),
    };
    config.validate()?;
    if seeds.is_empty() || a.strategy.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed and one strategy".into()));
    }
    let options = AlOptions {
        init_pool,
        train: TrainConfig {
            lr: a.lr,
            max_epochs: a.max_epochs,
            patience: a.patience,
            ..TrainConfig::default()
        },
        mc_passes: a.mc_passes,
        ..AlOptions::default()
    };
    let categories = pick_categories(dataset.records(), &a.categories)?;
    let keys = run_keys(&a.strategy, &categories, &seeds);
    let reports = run_reports(&dataset, &keys, &config, &options, &a.common.out.join("runs"))?;
    print_finals(&reports);
    Ok(())
}

pub(crate) fn load_runs(dir: &Path) -> Result<Vec<RunReport>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no run reports in {}", dir.display())));
    }
    paths.iter().map(RunReport::load).collect()
}

pub(crate) fn write_report(runs: &[RunReport], out: &Path) -> Result<String> {
    let curves = alloop::aggregate(runs)?;
    let csv = alloop::curves_csv(&curves);
    io::write_text(out.join("curves.csv"), &csv)?;
    io::write_json(out.join("curves.json"), &curves)?;
    Ok(csv)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let runs = load_runs(&a.runs)?;
    print!("{}", write_report(&runs, &a.common.out)?);
    Ok(())
}
