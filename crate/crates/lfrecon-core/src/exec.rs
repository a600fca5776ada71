//! Execution strategy: data-parallel loops with a sequential fallback.
//!
//! Everything compute-heavy in this crate funnels through [`par_map_indices`]
//! or [`par_chunks_mut`]. With the `parallel` feature (default) these run on
//! the rayon global pool; without it they are plain sequential loops. Both
//! paths produce bitwise-identical results: reductions are always merged in
//! index order with a chunking that does not depend on the worker count.

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn par_map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn par_map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` on every `chunk_len`-sized slice of `data` (last chunk may be
/// shorter), passing the chunk index. Chunk boundaries are fixed by
/// `chunk_len` alone, so the decomposition is identical however many workers
/// execute it.
#[cfg(feature = "parallel")]
pub fn par_chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Runs `f` on every `chunk_len`-sized slice of `data` (last chunk may be
/// shorter), passing the chunk index.
#[cfg(not(feature = "parallel"))]
pub fn par_chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Computes `f(i)` for `0..n` and folds the results in ascending index
/// order with `merge`. The fold order is deterministic regardless of how
/// the per-index work is scheduled.
pub fn par_map_reduce_ordered<T, F, M>(n: usize, f: F, init: T, merge: M) -> T
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
    M: Fn(T, T) -> T,
{
    let parts = par_map_indices(n, f);
    parts.into_iter().fold(init, merge)
}

/// Runs `f` inside a single-threaded rayon pool, forcing sequential
/// execution even when the `parallel` feature is enabled. Used by benches
/// to compare scheduling strategies on identical code.
#[cfg(feature = "parallel")]
pub fn run_single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("building a 1-thread pool cannot fail");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn run_single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// Number of worker threads the parallel paths will use.
#[cfg(feature = "parallel")]
pub fn worker_count() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
pub fn worker_count() -> usize {
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indices_preserves_order() {
        let v = par_map_indices(100, |i| i * i);
        assert_eq!(v.len(), 100);
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, i * i);
        }
    }

    #[test]
    fn chunks_cover_all_elements() {
        let mut data = vec![0u32; 103];
        par_chunks_mut(&mut data, 10, |ci, chunk| {
            for (j, x) in chunk.iter_mut().enumerate() {
                *x = (ci * 10 + j) as u32;
            }
        });
        for (i, x) in data.iter().enumerate() {
            assert_eq!(*x, i as u32);
        }
    }

    #[test]
    fn ordered_reduce_is_sequential_fold() {
        // String concatenation is order-sensitive; equality with the
        // sequential fold proves the merge order.
        let got = par_map_reduce_ordered(8, |i| i.to_string(), String::new(), |a, b| a + &b);
        assert_eq!(got, "01234567");
    }

    #[test]
    fn single_threaded_runs() {
        let v = run_single_threaded(|| par_map_indices(16, |i| i + 1));
        assert_eq!(v[15], 16);
    }
}
