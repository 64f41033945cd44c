//! Thin switch between rayon and sequential iteration.
//!
//! Every reduction here uses a fixed chunking so that the parallel and the
//! sequential builds produce bit-identical floating point results.

/// Chunk length used by [`sum_chunked`]. Changing it changes rounding.
pub const SUM_CHUNK: usize = 1024;

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sums `f(item)` with a fixed two-level tree: sequential inside chunks of
/// [`SUM_CHUNK`], then the chunk partials in order.
pub fn sum_chunked<T, V, F>(items: &[T], zero: V, f: F) -> V
where
    T: Sync,
    V: Send + Sync + Clone + std::ops::AddAssign,
    F: Fn(&T) -> V + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(SUM_CHUNK).collect();
    let partials = map(&chunks, |chunk| {
        let mut acc = zero.clone();
        for item in chunk.iter() {
            acc += f(item);
        }
        acc
    });
    let mut total = zero;
    for p in partials {
        total += p;
    }
    total
}

/// Whether this build runs data-parallel loops on the rayon pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f` on a dedicated pool with `threads` workers (no-op without the
/// `parallel` feature).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_is_thread_count_independent() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = with_threads(1, || sum_chunked(&xs, 0.0, |x| *x));
        let b = with_threads(4, || sum_chunked(&xs, 0.0, |x| *x));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
