//! Nearest-rank quantiles.
//!
//! The q-quantile of n values is the `ceil(q * n)`-th smallest value (1-based),
//! with q = 0 mapping to the minimum. No interpolation: the result is always
//! one of the inputs, so integer counts stay achievable sample sizes.

use crate::error::{Error, Result};

// Guards against products like 0.07 * 100 = 7.000000000000001 bumping the rank.
const RANK_EPS: f64 = 1e-9;

/// 0-based index of the nearest-rank q-quantile among `n` sorted values.
pub fn nearest_rank_index(n: usize, q: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::data("quantile of an empty sequence"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("quantile {q} outside [0, 1]")));
    }
    let rank = (q * n as f64 - RANK_EPS).ceil().max(1.0) as usize;
    Ok(rank.min(n) - 1)
}

/// Nearest-rank quantile of integer values.
pub fn nearest_rank_quantile<T: Ord + Copy>(values: &[T], q: f64) -> Result<T> {
    let idx = nearest_rank_index(values.len(), q)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    Ok(sorted[idx])
}

/// Nearest-rank quantile of floating point values, ordered by `total_cmp`.
pub fn nearest_rank_quantile_f64(values: &[f64], q: f64) -> Result<f64> {
    let idx = nearest_rank_index(values.len(), q)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[idx])
}

/// Same as [`nearest_rank_quantile_f64`] for data that is already sorted.
pub fn sorted_quantile_f64(sorted: &[f64], q: f64) -> Result<f64> {
    Ok(sorted[nearest_rank_index(sorted.len(), q)?])
}
