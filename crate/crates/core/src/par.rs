//! Data-parallel loop helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they are plain sequential loops. Only element-wise maps go through here.
//! Reductions stay sequential everywhere so results are bit-identical
//! regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
const MIN_LEN: usize = 1024;

/// `out[i] = f(i)` for every index.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut()
        .with_min_len(MIN_LEN)
        .enumerate()
        .for_each(|(i, x)| *x = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, x)| *x = f(i));
}

/// Builds a vector of length `n` from `f(i)`.
pub fn collect<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; n];
    fill(&mut out, f);
    out
}

/// Applies `f` to each contiguous chunk of `chunk` elements, with a per-task
/// scratch value produced by `init`.
pub fn chunks_with<T, S, I, F>(data: &mut [T], chunk: usize, init: I, f: F)
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).for_each_init(init, f);
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = init();
        data.chunks_mut(chunk).for_each(|c| f(&mut scratch, c));
    }
}

/// Applies `f(chunk_index, chunk)` to each contiguous chunk.
pub fn chunks_indexed<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Maps independent jobs, preserving order.
pub fn map_jobs<T, R, F>(jobs: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return jobs.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    jobs.iter().map(f).collect()
}

/// Sequential sum in index order.
pub fn sum(values: &[f64]) -> f64 {
    values.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_matches_sequential() {
        let v = collect(5000, |i| (i as f64).sqrt());
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, (i as f64).sqrt());
        }
    }

    #[test]
    fn jobs_keep_order() {
        let jobs: Vec<usize> = (0..64).collect();
        let out = map_jobs(&jobs, |j| j * 2);
        assert_eq!(out, (0..64).map(|j| j * 2).collect::<Vec<_>>());
    }
}
