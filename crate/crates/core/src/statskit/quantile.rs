use serde::{Deserialize, Serialize};

use super::StatsError;

/// Rule used to turn M sorted values into a q-quantile.
///
/// Only the conservative `ceil` rule is supported: the value at 1-based
/// index `⌈qM⌉`. It never interpolates, so the result is always one of the
/// inputs, and it can only round the index upwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    #[default]
    Ceil,
}

/// 1-based order-statistic index `⌈qM⌉`, clamped to `[1, M]`.
///
/// A relative slack of 1e-12 absorbs products such as `0.95 * 100` that land
/// a hair above an integer in binary floating point.
pub fn quantile_index(m: usize, q: f64) -> usize {
    let x = q * m as f64;
    let k = (x - x.abs() * 1e-12).ceil();
    (k.max(1.0) as usize).min(m)
}

fn check_q(q: f64) -> Result<(), StatsError> {
    if q.is_nan() || q <= 0.0 || q > 1.0 {
        return Err(StatsError::InvalidProbability(q));
    }
    Ok(())
}

/// The `⌈qM⌉`-th order statistic of `values`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_q(q)?;
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut work = values.to_vec();
    let k = quantile_index(work.len(), q);
    let (_, v, _) = work.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    Ok(*v)
}

/// Same as [`empirical_quantile`] for values already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_q(q)?;
    Ok(sorted[quantile_index(sorted.len(), q) - 1])
}

/// Distribution-free standard error of the `q`-quantile.
///
/// Half the distance between the order statistics at `q ± sqrt(q(1-q)/M)`,
/// i.e. the binomial one-sigma band of the quantile's rank.
pub fn quantile_standard_error_sorted(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_q(q)?;
    let m = sorted.len() as f64;
    let delta = (q * (1.0 - q) / m).sqrt();
    let lo_q = (q - delta).max(f64::MIN_POSITIVE);
    let hi_q = (q + delta).min(1.0);
    let lo = sorted[quantile_index(sorted.len(), lo_q) - 1];
    let hi = sorted[quantile_index(sorted.len(), hi_q) - 1];
    Ok((hi - lo) / 2.0)
}
