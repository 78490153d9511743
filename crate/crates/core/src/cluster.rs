//! k-means over normalized embeddings, medoid extraction and Dunn-index
//! cluster quality.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::ClustersFile;
use crate::par;
use crate::rng::{self, Stream};
use crate::types::EmbeddingMatrix;

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Slack for float noise when checking that inertia never goes up.
pub const MONOTONE_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub k: usize,
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    /// Sample id of each clustered row.
    pub sample_ids: Vec<usize>,
    /// Cluster of each clustered row, aligned with `sample_ids`.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Sample id of the member closest to each centroid.
    pub medoid_ids: Vec<usize>,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Artifact form, with assignments spread over all `n` embedding rows.
    pub fn to_file(&self, n: usize, seed: u64) -> ClustersFile {
        let mut assignments = vec![-1i64; n];
        for (&id, &a) in self.sample_ids.iter().zip(&self.assignments) {
            assignments[id] = a as i64;
        }
        ClustersFile {
            k: self.k,
            seed,
            inertia: self.inertia,
            assignments,
            medoid_ids: self.medoid_ids.clone(),
        }
    }
}

#[inline]
fn dist2_to(point: &[f32], centroid: &[f64]) -> f64 {
    point
        .iter()
        .zip(centroid)
        .map(|(&p, &c)| {
            let d = f64::from(p) - c;
            d * d
        })
        .sum()
}

/// k-means++ seeding: one D^2-weighted candidate per step.
pub fn plus_plus_init(x: &EmbeddingMatrix, k: usize, rng: &mut Stream) -> Vec<f64> {
    let n = x.n();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers: Vec<f64> = x.row(first).iter().map(|&v| f64::from(v)).collect();
    let mut d2: Vec<f64> = par::map_indexed(n, |i| dist2_to(x.row(i), &centers));

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    last_positive = i;
                    acc += w;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            // Every point coincides with a center; fall back to uniform.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let new: Vec<f64> = x.row(pick).iter().map(|&v| f64::from(v)).collect();
        let nd: Vec<f64> = par::map_indexed(n, |i| dist2_to(x.row(i), &new));
        d2.iter_mut().zip(nd).for_each(|(a, b)| *a = a.min(b));
        centers.extend(new);
    }
    centers
}

/// Nearest centroid of every row; ties go to the lowest cluster index.
fn assign(x: &EmbeddingMatrix, centroids: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let dim = x.dim();
    let pairs = par::map_indexed(x.n(), |i| {
        let row = x.row(i);
        let mut best = (0usize, f64::INFINITY);
        for c in 0..k {
            let d = dist2_to(row, &centroids[c * dim..(c + 1) * dim]);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    });
    pairs.into_iter().unzip()
}

/// Give each empty cluster the point farthest from its centroid (taken from
/// clusters with more than one member).
fn repair_empty(
    x: &EmbeddingMatrix,
    centroids: &mut [f64],
    assignments: &mut [usize],
    d2: &mut [f64],
    k: usize,
) {
    let dim = x.dim();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assignments.len() {
            if sizes[assignments[i]] > 1 && far.is_none_or(|f| d2[i] > d2[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        sizes[assignments[i]] -= 1;
        sizes[c] = 1;
        assignments[i] = c;
        d2[i] = 0.0;
        for (dst, &v) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(x.row(i)) {
            *dst = f64::from(v);
        }
    }
}

fn means(x: &EmbeddingMatrix, assignments: &[usize], k: usize, old: &[f64]) -> Vec<f64> {
    let dim = x.dim();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x.row(i)) {
            *s += f64::from(v);
        }
    }
    for c in 0..k {
        let block = &mut sums[c * dim..(c + 1) * dim];
        if counts[c] == 0 {
            block.copy_from_slice(&old[c * dim..(c + 1) * dim]);
        } else {
            block.iter_mut().for_each(|s| *s /= counts[c] as f64);
        }
    }
    sums
}

/// Member of each cluster closest to its centroid, ties by lowest row.
fn medoid_rows(x: &EmbeddingMatrix, centroids: &[f64], assignments: &[usize], k: usize) -> Vec<usize> {
    let dim = x.dim();
    let mut best: Vec<(usize, f64)> = vec![(usize::MAX, f64::INFINITY); k];
    for (i, &a) in assignments.iter().enumerate() {
        let d = dist2_to(x.row(i), &centroids[a * dim..(a + 1) * dim]);
        if d < best[a].1 {
            best[a] = (i, d);
        }
    }
    best.into_iter().map(|(i, _)| i).collect()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {n} points")));
    }
    Ok(())
}

/// Lloyd iterations from explicit initial centroids (`k x dim`, row-major).
pub fn kmeans_from_centers(
    x: &EmbeddingMatrix,
    initial: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let dim = x.dim();
    if initial.is_empty() || !initial.len().is_multiple_of(dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: initial.len(),
        });
    }
    let k = initial.len() / dim;
    check_k(k, x.n())?;

    let mut centroids = initial.to_vec();
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let (mut assignments, mut d2) = assign(x, &centroids, k);
        repair_empty(x, &mut centroids, &mut assignments, &mut d2, k);
        trace.push(d2.iter().sum::<f64>());
        let next = means(x, &assignments, k, &centroids);
        let shift = (0..k)
            .map(|c| {
                next[c * dim..(c + 1) * dim]
                    .iter()
                    .zip(&centroids[c * dim..(c + 1) * dim])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }
    let (mut assignments, mut d2) = assign(x, &centroids, k);
    repair_empty(x, &mut centroids, &mut assignments, &mut d2, k);
    let inertia = d2.iter().sum::<f64>();
    trace.push(inertia);
    let medoid_ids = medoid_rows(x, &centroids, &assignments, k);

    Ok(KMeansResult {
        k,
        dim,
        centroids,
        sample_ids: (0..x.n()).collect(),
        assignments,
        inertia,
        medoid_ids,
        inertia_trace: trace,
    })
}

/// k-means with k-means++ seeding from the `(seed, "kmeans")` stream.
///
/// Rows are expected to be L2-normalized.
pub fn kmeans(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    check_k(k, x.n())?;
    let init = plus_plus_init(x, k, &mut rng::fork(seed, "kmeans"));
    kmeans_from_centers(x, &init, max_iters, tol)
}

/// k-means over the rows `ids` of `x`; sample and medoid ids refer to `x`.
pub fn kmeans_ids(
    x: &EmbeddingMatrix,
    ids: &[usize],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let sub = x.select_rows(ids)?;
    let mut result = kmeans(&sub, k, seed, max_iters, tol)?;
    result.medoid_ids = result.medoid_ids.iter().map(|&r| ids[r]).collect();
    result.sample_ids = ids.to_vec();
    Ok(result)
}

/// Default cluster count for a pool: `round(n / 10)`, at least 1.
pub fn default_k(n: usize) -> usize {
    ((n as f64 / 10.0).round() as usize).clamp(1, n.max(1))
}

/// True iff the trace never rises by more than [`MONOTONE_SLACK`].
pub fn inertia_monotone_check(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK)
}

/// Dunn statistics of one clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct DunnStats {
    /// Cluster labels in ascending order; `per_cluster[i]` refers to `labels[i]`.
    pub labels: Vec<usize>,
    /// Nearest-other-cluster distance over own diameter. Singletons are
    /// `+inf`.
    pub per_cluster: Vec<f64>,
    /// Minimum inter-cluster distance over maximum diameter; `+inf` when
    /// every cluster is a singleton.
    pub global: f64,
}

/// Summary of the finite per-cluster values.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DunnSummary {
    pub finite: usize,
    pub singletons: usize,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

impl DunnStats {
    pub fn summary(&self) -> DunnSummary {
        let mut vals: Vec<f64> = self.per_cluster.iter().copied().filter(|v| v.is_finite()).collect();
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        DunnSummary {
            finite: n,
            singletons: self.per_cluster.len() - n,
            min: vals.first().copied(),
            median: (n > 0).then(|| crate::initsample::percentile(&vals, 50.0).expect("non-empty")),
            mean: (n > 0).then(|| vals.iter().sum::<f64>() / n as f64),
            max: vals.last().copied(),
        }
    }
}

/// Dunn index with single-linkage inter-cluster distance and complete
/// diameter, from all pairwise Euclidean distances.
pub fn dunn(x: &EmbeddingMatrix, assignments: &[usize]) -> Result<DunnStats> {
    if assignments.len() != x.n() {
        return Err(Error::DimMismatch {
            expected: x.n(),
            actual: assignments.len(),
        });
    }
    let labels: Vec<usize> = assignments
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = labels.len();
    if k < 2 {
        return Err(Error::UndefinedDunn(k));
    }
    let index: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let compact: Vec<usize> = assignments.iter().map(|a| index[a]).collect();
    let n = x.n();

    // (diameter per cluster, min distance per cluster pair)
    let (diam, inter) = par::fold_exact(
        n,
        || (vec![0.0f64; k], vec![f64::INFINITY; k * k]),
        |(mut diam, mut inter), i| {
            let ci = compact[i];
            let row = x.row(i);
            for j in i + 1..n {
                let d = crate::types::squared_distance(row, x.row(j)).sqrt();
                let cj = compact[j];
                if ci == cj {
                    diam[ci] = diam[ci].max(d);
                } else {
                    let (a, b) = (ci.min(cj), ci.max(cj));
                    inter[a * k + b] = inter[a * k + b].min(d);
                }
            }
            (diam, inter)
        },
        |(da, ia), (db, ib)| {
            (
                da.iter().zip(&db).map(|(a, b)| a.max(*b)).collect(),
                ia.iter().zip(&ib).map(|(a, b)| a.min(*b)).collect(),
            )
        },
    );

    let between = |a: usize, b: usize| inter[a.min(b) * k + a.max(b)];
    let per_cluster = (0..k)
        .map(|c| {
            let nearest = (0..k).filter(|&o| o != c).map(|o| between(c, o)).fold(f64::INFINITY, f64::min);
            if diam[c] == 0.0 {
                f64::INFINITY
            } else {
                nearest / diam[c]
            }
        })
        .collect();
    let min_inter = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .map(|(a, b)| between(a, b))
        .fold(f64::INFINITY, f64::min);
    let max_diam = diam.iter().copied().fold(0.0, f64::max);
    let global = if max_diam == 0.0 {
        f64::INFINITY
    } else {
        min_inter / max_diam
    };
    Ok(DunnStats {
        labels,
        per_cluster,
        global,
    })
}
