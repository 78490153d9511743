//! Acquiring the first labeled set, and simulating how many annotation
//! actions that costs when drawing from the full pool versus the cluster
//! medoids.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Stream};

pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Full,
    Medoids,
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PoolKind::Full),
            "medoids" => Ok(PoolKind::Medoids),
            other => Err(Error::InvalidArgument(format!(
                "unknown pool kind {other:?}; allowed: full, medoids"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialSample {
    /// The first `init_pos` positives and `init_neg` negatives drawn, in
    /// draw order.
    pub labeled: Vec<(usize, bool)>,
    /// One action per draw.
    pub actions: usize,
    pub succeeded: bool,
}

/// Draw uniformly without replacement from `pool` until `init_pos`
/// positives and `init_neg` negatives have been seen, or the pool runs out.
pub fn sample_initial(
    pool: &[usize],
    oracle: impl Fn(usize) -> bool,
    init_pos: usize,
    init_neg: usize,
    rng: &mut Stream,
) -> Result<InitialSample> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut remaining = pool.to_vec();
    let (mut pos, mut neg) = (0, 0);
    let mut labeled = Vec::with_capacity(init_pos + init_neg);
    let mut actions = 0;
    while pos < init_pos || neg < init_neg {
        if actions == remaining.len() {
            return Ok(InitialSample {
                labeled,
                actions,
                succeeded: false,
            });
        }
        // Partial Fisher-Yates: position `actions` receives the next draw.
        let j = rng.random_range(actions..remaining.len());
        remaining.swap(actions, j);
        let id = remaining[actions];
        actions += 1;
        let label = oracle(id);
        if label && pos < init_pos {
            pos += 1;
            labeled.push((id, true));
        } else if !label && neg < init_neg {
            neg += 1;
            labeled.push((id, false));
        }
    }
    Ok(InitialSample {
        labeled,
        actions,
        succeeded: true,
    })
}

/// Linear-interpolation percentile: with the values sorted ascending and
/// 1-based rank `r = 1 + q (n - 1) / 100`, interpolate between the order
/// statistics at `floor(r)` and `ceil(r)`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("percentile {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Zero-based position q (n - 1) / 100, split so integer q stays exact.
    let scaled = q * (sorted.len() - 1) as f64;
    let lo = (scaled / 100.0).floor() as usize;
    let frac = (scaled - 100.0 * lo as f64) / 100.0;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Relative reduction of the 90th percentile, in percent, rounded to one
/// decimal.
pub fn gain_percent(p90_full: f64, p90_medoids: f64) -> Result<f64> {
    if !p90_full.is_finite() || p90_full <= 0.0 || !p90_medoids.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gain needs a positive baseline, got {p90_full}"
        )));
    }
    let raw = 100.0 * (p90_full - p90_medoids) / p90_full;
    Ok((raw * 10.0).round() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortStats {
    pub pool_kind: PoolKind,
    pub pool_size: usize,
    pub trials: usize,
    pub success_count: usize,
    /// Over successful trials only; `None` when none succeeded.
    pub median: Option<f64>,
    pub p90: Option<f64>,
    /// Actions of every trial in trial order, failures included.
    #[serde(skip)]
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffortConfig {
    pub trials: usize,
    pub init_pos: usize,
    pub init_neg: usize,
    pub seed: u64,
}

impl Default for EffortConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            init_pos: 5,
            init_neg: 5,
            seed: 0,
        }
    }
}

/// Run independent [`sample_initial`] trials over `pool`. Trial `t` uses
/// sub-stream `t` of `(seed, "effort-<kind>")`.
pub fn simulate_effort(
    pool: &[usize],
    oracle: impl Fn(usize) -> bool + Sync,
    kind: PoolKind,
    config: &EffortConfig,
) -> Result<EffortStats> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let label = match kind {
        PoolKind::Full => "effort-full",
        PoolKind::Medoids => "effort-medoids",
    };
    let results: Vec<Result<InitialSample>> = par::map_indexed(config.trials, |t| {
        let mut rng = rng::fork_indexed(config.seed, label, t as u64);
        sample_initial(pool, &oracle, config.init_pos, config.init_neg, &mut rng)
    });
    let mut actions = Vec::with_capacity(config.trials);
    let mut successes = Vec::with_capacity(config.trials);
    for r in results {
        let r = r?;
        actions.push(r.actions);
        if r.succeeded {
            successes.push(r.actions as f64);
        }
    }
    if successes.len() < config.trials {
        log::warn!(
            "{kind:?} pool: only {}/{} trials collected {} positives and {} negatives",
            successes.len(),
            config.trials,
            config.init_pos,
            config.init_neg
        );
    }
    let stat = |q| (!successes.is_empty()).then(|| percentile(&successes, q).expect("non-empty"));
    Ok(EffortStats {
        pool_kind: kind,
        pool_size: pool.len(),
        trials: config.trials,
        success_count: successes.len(),
        median: stat(50.0),
        p90: stat(90.0),
        actions,
    })
}

/// One row of an effort comparison: both pools for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortRow {
    pub category: String,
    pub full: EffortStats,
    pub medoids: EffortStats,
    pub gain: Option<f64>,
}

impl EffortRow {
    pub fn new(category: impl Into<String>, full: EffortStats, medoids: EffortStats) -> Self {
        let gain = match (full.p90, medoids.p90) {
            (Some(f), Some(m)) => gain_percent(f, m).ok(),
            _ => None,
        };
        Self {
            category: category.into(),
            full,
            medoids,
            gain,
        }
    }
}

/// Aligned text table: category, median and 90th percentile per pool, gain.
pub fn effort_table(rows: &[EffortRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.1}"));
    let width = rows.iter().map(|r| r.category.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>21}  {:>21}  {:>8}",
        "", "full dataset", "medoids", ""
    );
    let _ = writeln!(
        out,
        "{:<width$}  {:>10} {:>10}  {:>10} {:>10}  {:>8}",
        "category", "median", "90th%tile", "median", "90th%tile", "gain(%)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>10} {:>10}  {:>10} {:>10}  {:>8}",
            r.category,
            fmt(r.full.median),
            fmt(r.full.p90),
            fmt(r.medoids.median),
            fmt(r.medoids.p90),
            fmt(r.gain)
        );
    }
    out
}
