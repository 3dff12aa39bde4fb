//! Data-parallel loops with a fixed reduction order.
//!
//! Every reduction splits the index range into chunks of [`CHUNK`] items, sums each
//! chunk left to right and then folds the partial sums left to right, so results are
//! bit-identical with and without the `parallel` feature and for any worker count.

pub(crate) const CHUNK: usize = 2048;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..chunks).into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..chunks).map(partial).collect();
    partials.iter().fold(0.0, |a, b| a + b)
}

pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().with_min_len(CHUNK / 4).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sums a slice with the same chunked order as [`chunked_sum`].
pub(crate) fn sum_slice(values: &[f64]) -> f64 {
    chunked_sum(values.len(), |i| values[i])
}

/// Applies `f` to every element with its index.
pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().with_min_len(CHUNK / 4).enumerate().for_each(|(i, t)| f(i, t));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    }
}
