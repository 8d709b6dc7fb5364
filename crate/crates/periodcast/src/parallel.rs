//! Data-parallel map helpers. The `parallel` feature routes batch work
//! through rayon; without it everything runs sequentially. Results are
//! collected in input order either way, so reductions stay deterministic.

/// Sequential map, always available (used by benches as the baseline).
pub fn seq_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    seq_map(items, f)
}

/// Map over an index range, parallel when the feature is enabled.
pub fn par_map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    let idx: Vec<usize> = (0..n).collect();
    par_map(&idx, |&i| f(i))
}
