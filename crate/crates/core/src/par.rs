//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these run on the current rayon pool; without
//! it they are plain iterator loops. Both paths return results in index
//! order, so callers that reduce sequentially get bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f(0), f(1), ..., f(n - 1)` collected in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// `f` applied to every item of `items`, in order.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

/// Fold over `0..n` and merge partial accumulators.
///
/// Only use with exactly associative and commutative merges (min, max,
/// integer sums); float sums would depend on the work split.
#[cfg(feature = "parallel")]
pub fn fold_exact<A, Id, F, R>(n: usize, identity: Id, fold: F, reduce: R) -> A
where
    A: Send,
    Id: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    (0..n).into_par_iter().fold(&identity, fold).reduce(&identity, reduce)
}

#[cfg(not(feature = "parallel"))]
pub fn fold_exact<A, Id, F, R>(n: usize, identity: Id, fold: F, _reduce: R) -> A
where
    A: Send,
    Id: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    (0..n).fold(identity(), fold)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Run `f` on a dedicated pool of `threads` workers (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
