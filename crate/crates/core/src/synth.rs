//! Synthetic embedding spaces for desk-scale experiments.
//!
//! Classes are Gaussian blobs around well-separated centers, projected onto
//! the unit sphere. A second, "student" space can be derived from a teacher
//! space by mixing in nuisance dimensions and rotating, which is what the
//! distillation stage is meant to undo.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Stream};
use crate::types::{l2_normalize, EmbeddingMatrix, SampleRecord, Split};

const MAX_BASIS_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_samples: usize,
    pub dim: usize,
    pub class_prevalences: Vec<f64>,
    /// Pairwise distance between class centers before normalization.
    pub center_separation: f64,
    /// Per-coordinate standard deviation of the Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_classes == 0 || self.n_samples == 0 || self.dim == 0 {
            return bad("classes, samples and dim must all be >= 1".into());
        }
        if self.class_prevalences.len() != self.n_classes {
            return bad(format!(
                "{} prevalences given for {} classes",
                self.class_prevalences.len(),
                self.n_classes
            ));
        }
        if self
            .class_prevalences
            .iter()
            .any(|p| !p.is_finite() || *p < 0.0)
        {
            return bad("prevalences must be finite and non-negative".into());
        }
        let sum: f64 = self.class_prevalences.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("prevalences sum to {sum}, not 1"));
        }
        if !self.center_separation.is_finite() || self.center_separation < 0.0 {
            return bad("center separation must be finite and >= 0".into());
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad("noise sigma must be finite and >= 0".into());
        }
        if self.center_separation == 0.0 && self.noise_sigma == 0.0 {
            return bad("separation and sigma cannot both be zero".into());
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub embeddings: EmbeddingMatrix,
    pub records: Vec<SampleRecord>,
    /// Generating class of each sample.
    pub classes: Vec<usize>,
    /// Class centers, unnormalized, row-major `n_classes x dim`.
    pub centers: Vec<f64>,
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

/// Random orthonormal rows via Gram-Schmidt on Gaussian vectors.
fn orthonormal_rows(count: usize, dim: usize, rng: &mut Stream) -> Option<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..MAX_BASIS_ATTEMPTS {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(basis.concat())
}

/// A random `dim x dim` orthogonal matrix, row-major.
pub fn random_orthogonal(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::fork(seed, "orthogonal");
    orthonormal_rows(dim, dim, &mut rng).expect("gaussian vectors are almost surely independent")
}

/// Centers on a scaled cross-polytope (`+-` random orthonormal directions),
/// so every pair is at least `separation` apart. Feasible up to `2 * dim`
/// classes.
fn place_centers(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    let (k, dim) = (spec.n_classes, spec.dim);
    if spec.center_separation == 0.0 {
        return Ok(vec![0.0; k * dim]);
    }
    let infeasible = |attempts| Error::InfeasibleCenters {
        classes: k,
        separation: spec.center_separation,
        attempts,
    };
    if k > 2 * dim {
        return Err(infeasible(0));
    }
    let mut rng = rng::fork(spec.seed, "synth-centers");
    let axes = k.min(dim);
    let basis = orthonormal_rows(axes, dim, &mut rng).ok_or(infeasible(MAX_BASIS_ATTEMPTS))?;
    let radius = spec.center_separation / std::f64::consts::SQRT_2;
    let mut centers = Vec::with_capacity(k * dim);
    for c in 0..k {
        let sign = if c < axes { 1.0 } else { -1.0 };
        let axis = &basis[(c % axes) * dim..(c % axes + 1) * dim];
        centers.extend(axis.iter().map(|x| sign * radius * x));
    }
    Ok(centers)
}

/// Sample a labeled embedding space.
///
/// Sample `i` draws its class and noise from its own stream, so the output
/// is a pure function of the spec. Splits are 70/10/20 by seeded shuffle.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let centers = place_centers(spec)?;
    let weights = WeightedIndex::new(&spec.class_prevalences)
        .map_err(|e| Error::InvalidSpec(format!("prevalences: {e}")))?;
    let dim = spec.dim;

    let samples: Vec<Result<(usize, Vec<f32>)>> = par::map_indexed(spec.n_samples, |i| {
        let mut rng = rng::fork_indexed(spec.seed, "synth-sample", i as u64);
        let class = weights.sample(&mut rng);
        let center = &centers[class * dim..(class + 1) * dim];
        let raw: Vec<f32> = center
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                (c + spec.noise_sigma * z) as f32
            })
            .collect();
        Ok((class, l2_normalize(&raw)?))
    });

    let mut classes = Vec::with_capacity(spec.n_samples);
    let mut data = Vec::with_capacity(spec.n_samples * dim);
    for s in samples {
        let (class, row) = s?;
        classes.push(class);
        data.extend(row);
    }

    let splits = assign_splits(spec.n_samples, spec.seed);
    let records = classes
        .iter()
        .zip(splits)
        .enumerate()
        .map(|(id, (&c, split))| SampleRecord {
            id,
            categories: [class_name(c)].into_iter().collect(),
            split,
            text: None,
        })
        .collect();

    Ok(Synthetic {
        embeddings: EmbeddingMatrix::new(spec.n_samples, dim, data)?,
        records,
        classes,
        centers,
    })
}

/// 70% train, 10% dev, rest test, by seeded shuffle of the ids.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::fork(seed, "synth-split"));
    let n_train = (n as f64 * 0.7).round() as usize;
    let n_dev = (n as f64 * 0.1).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (rank, &id) in order.iter().enumerate() {
        if rank < n_train {
            splits[id] = Split::Train;
        } else if rank < n_train + n_dev {
            splits[id] = Split::Dev;
        }
    }
    splits
}

/// How to derive a student space from a teacher space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrambleSpec {
    /// Must be at least the teacher dim; extra coordinates carry nuisance.
    pub student_dim: usize,
    pub signal_scale: f64,
    pub nuisance_sigma: f64,
    pub seed: u64,
}

/// Student row = R * [signal_scale * teacher_row ; nuisance], with R a
/// random rotation of the student space. A linear map back to the teacher
/// space exists, but distances in the student space are dominated by the
/// nuisance coordinates.
pub fn scramble(teacher: &EmbeddingMatrix, spec: &ScrambleSpec) -> Result<EmbeddingMatrix> {
    let (dt, ds) = (teacher.dim(), spec.student_dim);
    if ds < dt {
        return Err(Error::InvalidSpec(format!(
            "student dim {ds} is smaller than teacher dim {dt}"
        )));
    }
    if !spec.signal_scale.is_finite()
        || spec.signal_scale <= 0.0
        || !spec.nuisance_sigma.is_finite()
        || spec.nuisance_sigma < 0.0
    {
        return Err(Error::InvalidSpec(
            "signal scale must be > 0 and nuisance sigma >= 0".into(),
        ));
    }
    let rot = random_orthogonal(ds, rng::derive_seed(spec.seed, "scramble-rotation", 0));
    let rows: Vec<Vec<f32>> = par::map_indexed(teacher.n(), |i| {
        let mut rng = rng::fork_indexed(spec.seed, "scramble-nuisance", i as u64);
        let mut latent: Vec<f64> = teacher
            .row(i)
            .iter()
            .map(|&x| spec.signal_scale * f64::from(x))
            .collect();
        latent.extend((dt..ds).map(|_| spec.nuisance_sigma * rng.sample::<f64, _>(StandardNormal)));
        (0..ds)
            .map(|r| {
                rot[r * ds..(r + 1) * ds]
                    .iter()
                    .zip(&latent)
                    .map(|(a, b)| a * b)
                    .sum::<f64>() as f32
            })
            .collect()
    });
    EmbeddingMatrix::new(teacher.n(), ds, rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::squared_distance;

    fn spec(prev: Vec<f64>, sep: f64, sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_classes: prev.len(),
            n_samples: 200,
            dim: 8,
            class_prevalences: prev,
            center_separation: sep,
            noise_sigma: sigma,
            seed: 3,
        }
    }

    #[test]
    fn zero_noise_hits_normalized_centers() {
        let s = spec(vec![0.5, 0.5], 1.0, 0.0);
        let out = generate_synthetic(&s).unwrap();
        for (i, &c) in out.classes.iter().enumerate() {
            let center: Vec<f32> = out.centers[c * 8..(c + 1) * 8]
                .iter()
                .map(|&x| x as f32)
                .collect();
            let unit = l2_normalize(&center).unwrap();
            assert_eq!(out.embeddings.row(i), unit.as_slice());
        }
    }

    #[test]
    fn centers_respect_separation() {
        for k in [2, 5, 8, 16] {
            let prev = vec![1.0 / k as f64; k];
            let s = SyntheticSpec { n_classes: k, ..spec(prev, 1.3, 0.1) };
            let centers = place_centers(&s).unwrap();
            for a in 0..k {
                for b in a + 1..k {
                    let d: f64 = (0..8)
                        .map(|j| (centers[a * 8 + j] - centers[b * 8 + j]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(d >= 1.3 - 1e-9, "classes {a},{b}: {d}");
                }
            }
        }
    }

    #[test]
    fn too_many_classes_is_infeasible() {
        let s = SyntheticSpec { n_classes: 17, ..spec(vec![1.0 / 17.0; 17], 1.0, 0.1) };
        assert!(matches!(generate_synthetic(&s), Err(Error::InfeasibleCenters { .. })));
    }

    #[test]
    fn bad_prevalences_rejected() {
        assert!(matches!(
            generate_synthetic(&spec(vec![0.5, 0.4], 1.0, 0.1)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn rows_are_unit_and_splits_are_70_10_20() {
        let out = generate_synthetic(&spec(vec![0.3, 0.7], 1.0, 0.2)).unwrap();
        for row in out.embeddings.rows() {
            let n: f64 = row.iter().map(|&x| f64::from(x).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
        let count = |s| out.records.iter().filter(|r| r.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (140, 20, 40));
    }

    #[test]
    fn scramble_preserves_a_linear_inverse() {
        let t = generate_synthetic(&spec(vec![0.5, 0.5], 1.0, 0.1)).unwrap().embeddings;
        let s = scramble(
            &t,
            &ScrambleSpec { student_dim: 12, signal_scale: 0.5, nuisance_sigma: 0.0, seed: 1 },
        )
        .unwrap();
        // With no nuisance the rotation keeps distances up to the signal scale.
        let dt = squared_distance(t.row(0), t.row(1)).sqrt();
        let ds = squared_distance(s.row(0), s.row(1)).sqrt();
        assert!((ds - 0.5 * dt).abs() < 1e-5);
    }
}
