//! Fixtures for the acceptance suite: the published effort tables and the
//! synthetic datasets each criterion runs on.

use coldstart_al::rng;
use coldstart_al::synth::{self, SyntheticSpec};
use coldstart_al::{Dataset, EmbeddingMatrix, Result};
use rand_distr::{Distribution, StandardNormal};

/// One row of a published initial-sampling effort table.
#[derive(Debug, Clone, Copy)]
pub struct GoldenRow {
    pub table: &'static str,
    pub category: &'static str,
    pub full_median: f64,
    pub full_p90: f64,
    pub medoid_median: f64,
    pub medoid_p90: f64,
    pub gain: f64,
}

const fn row(
    table: &'static str,
    category: &'static str,
    v: [f64; 5],
) -> GoldenRow {
    GoldenRow {
        table,
        category,
        full_median: v[0],
        full_p90: v[1],
        medoid_median: v[2],
        medoid_p90: v[3],
        gain: v[4],
    }
}

/// Thirteen rows of the main table followed by nine appendix rows.
pub const GOLDEN: [GoldenRow; 22] = [
    row("1", "Inclusion of verbally conveyed information", [75.0, 125.0, 35.5, 59.0, 52.8]),
    row("1", "No licensing", [64.0, 108.0, 68.5, 109.1, -1.0]),
    row("1", "No reverse engineering", [342.0, 568.0, 144.0, 209.1, 63.2]),
    row("1", "Notice on compelled disclosure", [74.5, 122.0, 99.0, 155.0, -27.0]),
    row("1", "Sharing with employees", [57.0, 90.0, 21.0, 34.1, 62.1]),
    row("1", "Sharing with third-parties", [54.0, 92.1, 21.0, 35.0, 62.0]),
    row("1", "Survival of obligations", [64.0, 106.0, 36.0, 57.0, 46.2]),
    row("1", "Return of confidential information", [116.0, 189.0, 61.0, 99.0, 47.6]),
    row("1", "Amendments", [23.0, 37.1, 21.0, 33.0, 10.8]),
    row("1", "Counterparts", [26.0, 42.0, 34.0, 54.1, -28.8]),
    row("1", "Entire agreements", [26.0, 42.0, 33.0, 55.0, -30.9]),
    row("1", "Governing laws", [17.5, 28.0, 14.0, 21.0, 25.0]),
    row("1", "Notices", [29.0, 49.0, 26.0, 44.0, 10.2]),
    row("3", "Confidentiality of Agreement", [125.0, 215.1, 120.0, 178.2, 17.1]),
    row("3", "Explicit identification", [100.0, 161.1, 48.0, 77.0, 52.2]),
    row("3", "Limited use", [56.0, 90.1, 37.0, 58.0, 35.6]),
    row("3", "No solicitation", [227.0, 383.0, 178.0, 261.0, 31.8]),
    row("3", "None-inclusion of non-technical information", [61.0, 101.1, 39.0, 64.0, 36.7]),
    row("3", "Permissible acquirement of similar information", [65.0, 107.0, 91.0, 145.0, -35.5]),
    row("3", "Permissible copy", [121.0, 197.0, 68.0, 108.0, 45.2]),
    row("3", "Permissible development of similar information", [77.0, 129.1, 82.0, 129.0, 0.1]),
    row("3", "Permissible post-agreement possession", [66.0, 108.1, 41.0, 66.0, 38.9]),
];

/// Classic nearest-rank-with-interpolation percentile computed directly from
/// order statistics with exact rational position arithmetic.
pub fn brute_percentile(values: &[f64], q: u32) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as u64;
    // position = q (n - 1) / 100 as an exact fraction num / 100
    let num = u64::from(q) * (n - 1);
    let lo = (num / 100) as usize;
    let rem = num % 100;
    if rem == 0 {
        return v[lo];
    }
    v[lo] + (rem as f64 / 100.0) * (v[lo + 1] - v[lo])
}

fn gaussian(rng: &mut rng::Stream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Points of one class: `groups` group centers on the unit sphere, with
/// `per_group` points each scattered by `sigma` per coordinate.
#[derive(Debug, Clone, Copy)]
pub struct ClassLayout {
    pub groups: usize,
    pub per_group: usize,
    pub sigma: f64,
}

/// Labeled points built from one layout per class (class 1 is positive).
/// Rows are L2-normalized and interleaved in a seeded random order.
pub fn grouped_points(
    negative: ClassLayout,
    positive: ClassLayout,
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, Vec<bool>)> {
    let mut rng = rng::fork(seed, "grouped-points");
    let mut rows = Vec::new();
    for (layout, label) in [(negative, false), (positive, true)] {
        for _ in 0..layout.groups {
            let center = unit(&gaussian(&mut rng, dim));
            for _ in 0..layout.per_group {
                let noise = gaussian(&mut rng, dim);
                let p: Vec<f64> = center.iter().zip(&noise).map(|(c, e)| c + layout.sigma * e).collect();
                rows.push((unit(&p), label));
            }
        }
    }
    rand::seq::SliceRandom::shuffle(rows.as_mut_slice(), &mut rng);
    let labels = rows.iter().map(|r| r.1).collect();
    let rows: Vec<Vec<f32>> = rows.into_iter().map(|(p, _)| p.iter().map(|&x| x as f32).collect()).collect();
    Ok((EmbeddingMatrix::from_rows(&rows)?, labels))
}

/// Two Gaussian blobs `separation` apart along the first axis, `n` points
/// each, blob 0 first. Not normalized.
pub fn two_blobs(n: usize, dim: usize, separation: f64, sigma: f64, seed: u64) -> Result<EmbeddingMatrix> {
    let mut rng = rng::fork(seed, "two-blobs");
    let mut rows = Vec::with_capacity(2 * n);
    for blob in 0..2 {
        for _ in 0..n {
            let mut p = gaussian(&mut rng, dim);
            for x in &mut p {
                *x *= sigma;
            }
            p[0] += blob as f64 * separation;
            rows.push(p.iter().map(|&x| x as f32).collect());
        }
    }
    EmbeddingMatrix::from_rows(&rows)
}

/// Binary task for the end-to-end loop: 3000 samples, 10% positive
/// (category `class1`), 32 dims, unit center separation.
pub fn al_dataset(sigma: f64, seed: u64) -> Result<Dataset> {
    let spec = SyntheticSpec {
        n_classes: 2,
        n_samples: 3000,
        dim: 32,
        class_prevalences: vec![0.9, 0.1],
        center_separation: 1.0,
        noise_sigma: sigma,
        seed,
    };
    let s = synth::generate_synthetic(&spec)?;
    Dataset::new(s.embeddings, s.records)
}

pub const AL_CATEGORY: &str = "class1";
