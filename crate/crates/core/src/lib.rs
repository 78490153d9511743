//! Pool-based active learning for binary text classification over
//! precomputed sentence embeddings.
//!
//! The pipeline has four stages, each in its own module:
//!
//! - [`distill`] learns a linear projection from a student embedding space
//!   into a teacher space by minimizing mean squared error.
//! - [`cluster`] runs k-means over normalized embeddings, extracts medoids and
//!   scores clusterings with the Dunn index.
//! - [`initsample`] acquires the first labeled set (positives and negatives)
//!   from either the full pool or the cluster medoids, and simulates how many
//!   annotation actions that takes.
//! - [`alloop`] trains a small dropout classifier ([`model`]), picks the next
//!   batch with one of the [`acquire`] strategies and records F1 curves.
//!
//! Everything random is driven by [`rng::fork`], so results depend only on
//! seeds and never on thread count. Data-parallel loops go through [`par`],
//! which uses rayon when the `parallel` feature is enabled.

pub mod acquire;
pub mod alloop;
pub mod cluster;
pub mod distill;
pub mod error;
pub mod initsample;
pub mod io;
pub mod model;
pub mod par;
pub mod rng;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use types::{
    l2_normalize, AlRunConfig, BinaryTask, Dataset, EmbeddingMatrix, Pools, SampleRecord, Split,
    Strategy,
};
