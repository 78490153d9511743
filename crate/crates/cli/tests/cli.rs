use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coldstart_al::alloop::RunReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coldstart-al"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "off").output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}

const SUBCOMMANDS: [&str; 8] = [
    "gen-synthetic",
    "distill",
    "cluster",
    "dunn",
    "simulate-initial",
    "run-al",
    "report",
    "experiment",
];

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut cases = vec![("coldstart-al".to_string(), vec!["--help"])];
    for sub in SUBCOMMANDS {
        cases.push((sub.to_string(), vec![sub, "--help"]));
    }
    for (name, args) in cases {
        let text = ok(&args);
        let path = golden.join(format!("{name}.txt"));
        if update {
            fs::create_dir_all(&golden).unwrap();
            fs::write(&path, &text).unwrap();
        } else {
            let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
            assert_eq!(text, want, "help drift for {name}; rerun with UPDATE_GOLDEN=1 if intended");
        }
    }
}

#[test]
fn help_lists_common_flags() {
    for sub in SUBCOMMANDS {
        let text = ok(&[sub, "--help"]);
        for flag in ["--seed", "--jobs", "--out"] {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
    }
}

fn gen_args<'a>(out: &'a str, prevalences: &'a str) -> Vec<&'a str> {
    vec![
        "gen-synthetic", "--n", "1000", "--dim", "32", "--classes", "2", "--prevalences", prevalences,
        "--seed", "7", "--out", out,
    ]
}

#[test]
fn gen_synthetic_writes_two_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let text = ok(&gen_args(s(&a), "0.9,0.1"));
    assert!(text.lines().any(|l| l.starts_with("minority: class1 ")), "{text}");
    let files = snapshot(&a);
    assert_eq!(
        files.keys().cloned().collect::<Vec<_>>(),
        vec![PathBuf::from("embeddings.aleb"), PathBuf::from("labels.jsonl")]
    );
    ok(&gen_args(s(&b), "0.9,0.1"));
    assert_eq!(files, snapshot(&b));
}

#[test]
fn bad_prevalences_fail_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let res = run(&gen_args(s(&out), "0.9,0.2"));
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.starts_with("error[usage]: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!out.exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bad.aleb");
    fs::write(&bogus, b"XXXX\x01\0\0\0\0\0\0\0\0").unwrap();
    let res = run(&["cluster", "--embeddings", s(&bogus), "--all-rows", "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.starts_with("error[data]: bad magic"), "{err}");

    let res = run(&["run-al", "--strategy", "nope", "--embeddings", "a", "--labels", "b", "--out", "c"]);
    assert_eq!(res.status.code(), Some(2));
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&[
            "gen-synthetic", "--n", "600", "--dim", "8", "--classes", "3", "--prevalences", "0.6,0.3,0.1",
            "--separation", "1.0", "--sigma", "0.05", "--student-dim", "16", "--seed", "3",
            "--out", s(&root.join("data")),
        ]);
        Fixture { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_str().unwrap().to_string()
    }
}

/// Every command of the pipeline into `out`, with the given job count.
fn pipeline(fx: &Fixture, out: &str, jobs: &str) {
    let o = |sub: &str| format!("{out}/{sub}");
    ok(&["distill", "--student", &fx.p("data/student.aleb"), "--teacher", &fx.p("data/embeddings.aleb"),
        "--epochs", "3", "--lr", "1e-3", "--seed", "1", "--jobs", jobs, "--out", &o("distill")]);
    ok(&["cluster", "--embeddings", &o("distill/projected.aleb"), "--labels", &fx.p("data/labels.jsonl"),
        "--seed", "2", "--jobs", jobs, "--out", &o("cluster")]);
    ok(&["dunn", "--embeddings", &o("distill/projected.aleb"), "--clusters", &o("cluster/clusters.json"),
        "--jobs", jobs, "--out", &o("dunn")]);
    ok(&["simulate-initial", "--labels", &fx.p("data/labels.jsonl"), "--clusters", &o("cluster/clusters.json"),
        "--trials", "200", "--seed", "4", "--jobs", jobs, "--out", &o("effort")]);
    ok(&["run-al", "--embeddings", &fx.p("data/embeddings.aleb"), "--labels", &fx.p("data/labels.jsonl"),
        "--strategy", "random,hard_mining,dropout_perceptron,dal", "--iterations", "3", "--batch", "5",
        "--seeds", "2", "--categories", "class2", "--max-epochs", "30", "--seed", "5", "--jobs", jobs,
        "--out", &o("al")]);
    ok(&["report", "--runs", &o("al/runs"), "--jobs", jobs, "--out", &o("report")]);
}

#[test]
fn artifacts_are_identical_across_job_counts() {
    let fx = Fixture::new();
    let inputs = snapshot(&fx.root.join("data"));
    let a = fx.p("j1");
    let b = fx.p("j4");
    let c = fx.p("j1-again");
    pipeline(&fx, &a, "1");
    pipeline(&fx, &b, "4");
    pipeline(&fx, &c, "1");
    let sa = snapshot(Path::new(&a));
    assert!(sa.len() >= 10, "{:?}", sa.keys());
    assert_eq!(sa, snapshot(Path::new(&b)));
    assert_eq!(sa, snapshot(Path::new(&c)));
    assert_eq!(inputs, snapshot(&fx.root.join("data")), "inputs were modified");
}

#[test]
fn run_al_report_shape_and_csv_consistency() {
    let fx = Fixture::new();
    let out = fx.p("al");
    ok(&["run-al", "--embeddings", &fx.p("data/embeddings.aleb"), "--labels", &fx.p("data/labels.jsonl"),
        "--strategy", "dal", "--iterations", "5", "--batch", "10", "--seeds", "3", "--max-epochs", "30",
        "--out", &out]);
    let runs: Vec<RunReport> = fs::read_dir(format!("{out}/runs"))
        .unwrap()
        .map(|e| RunReport::load(e.unwrap().path()).unwrap())
        .collect();
    assert_eq!(runs.len(), 3 * 3, "3 seeds x 3 categories");
    let seeds: std::collections::BTreeSet<u64> = runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 3);
    for r in &runs {
        let grid: Vec<usize> = r.iterations.iter().map(|i| i.n_labeled).collect();
        assert_eq!(grid, vec![10, 20, 30, 40, 50]);
    }

    let csv = ok(&["report", "--runs", &format!("{out}/runs"), "--out", &out]);
    assert_eq!(csv, fs::read_to_string(format!("{out}/curves.csv")).unwrap());
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("strategy,n_labeled,mean_f1,std_f1"));
    for (j, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "dal");
        assert_eq!(cols[1].parse::<usize>().unwrap(), 10 * (j + 1));
        // Recompute from the run files: mean over seeds of the category mean.
        let mut per_seed = Vec::new();
        for &seed in &seeds {
            let f: Vec<f64> = runs.iter().filter(|r| r.seed == seed).map(|r| r.iterations[j].f1_test).collect();
            per_seed.push(f.iter().sum::<f64>() / f.len() as f64);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        assert_eq!(cols[2].parse::<f64>().unwrap(), mean);
    }
}

#[test]
fn simulate_initial_json_matches_table() {
    let fx = Fixture::new();
    let out = fx.p("sim");
    ok(&["cluster", "--embeddings", &fx.p("data/embeddings.aleb"), "--labels", &fx.p("data/labels.jsonl"),
        "--out", &out]);
    let table = ok(&["simulate-initial", "--labels", &fx.p("data/labels.jsonl"), "--clusters",
        &format!("{out}/clusters.json"), "--pool", "both", "--trials", "300", "--out", &out]);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(format!("{out}/effort.json")).unwrap()).unwrap();
    let cats = json["categories"].as_array().unwrap();
    assert_eq!(cats.len(), 3);
    for c in cats {
        let name = c["category"].as_str().unwrap();
        let f = c["full"]["p90"].as_f64().unwrap();
        let m = c["medoids"]["p90"].as_f64().unwrap();
        let gain = c["gain"].as_f64().unwrap();
        assert!((gain - (1000.0 * (f - m) / f).round() / 10.0).abs() < 1e-9);
        let row = table.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(row.trim_end().ends_with(&format!("{gain:.1}")), "{row}");
    }
}

#[test]
fn simulate_initial_medoids_requires_clusters() {
    let fx = Fixture::new();
    let res = run(&["simulate-initial", "--labels", &fx.p("data/labels.jsonl"), "--pool", "medoids",
        "--out", &fx.p("x")]);
    assert_eq!(res.status.code(), Some(2));
}

fn write_config(fx: &Fixture, body: &str) -> String {
    let path = fx.root.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn experiment_rejects_unknown_keys_and_missing_inputs_before_work() {
    let fx = Fixture::new();
    let cfg = write_config(&fx, "student = \"data/student.aleb\"\nlabels = \"data/labels.jsonl\"\nout = \"res\"\nstrategy = \"dal\"\n");
    let res = run(&["experiment", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown field"));
    assert!(!fx.root.join("res").exists());

    let cfg = write_config(&fx, "student = \"data/student.aleb\"\nteacher = \"data/missing.aleb\"\nlabels = \"data/labels.jsonl\"\nout = \"res\"\n");
    let res = run(&["experiment", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!fx.root.join("res").exists());
}

#[test]
fn experiment_runs_end_to_end() {
    let fx = Fixture::new();
    let cfg = write_config(
        &fx,
        r#"student = "data/student.aleb"
teacher = "data/embeddings.aleb"
labels = "data/labels.jsonl"
out = "res"
seed = 1
strategies = ["random", "dal"]
seeds = 2
iterations = 3
batch_size = 5
trials = 100
categories = ["class1", "class2"]
distill_epochs = 5
distill_lr = 1e-3
"#,
    );
    let text = ok(&["experiment", "--config", &cfg]);
    assert!(text.contains("strategy,n_labeled,mean_f1,std_f1"));
    let res = fx.root.join("res");
    for f in ["projection.alpj", "distill_report.json", "clusters.json", "dunn.json", "effort.json", "curves.csv"] {
        assert!(res.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read_dir(res.join("runs")).unwrap().count(), 2 * 2 * 2);
    let dunn: serde_json::Value = serde_json::from_slice(&fs::read(res.join("dunn.json")).unwrap()).unwrap();
    assert!(dunn["projected"]["k"].as_u64().is_some() && dunn["student"]["k"].as_u64().is_some());
}
