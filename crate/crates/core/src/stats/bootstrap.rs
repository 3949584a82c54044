//! Percentile bootstrap for the mean.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::derive_seed;

use super::{mean_of, ScoreVector, StatsError};

/// Point estimate with a percentile bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
}

/// Percentile bootstrap CI for the mean of the valid scores: `reps` resample
/// means (resample size n, with replacement), interval from the empirical
/// quantiles. Each replicate draws from its own RNG stream derived from
/// (seed, replicate index), so the result is independent of evaluation order.
pub fn bootstrap_ci(
    scores: &ScoreVector,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    bootstrap_ci_values(&scores.values(), reps, level, seed)
}

pub fn bootstrap_ci_values(
    values: &[u8],
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyScores);
    }
    if reps == 0 {
        return Err(StatsError::InvalidArgument("reps must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(StatsError::InvalidArgument(format!(
            "level {level} not in (0, 1)"
        )));
    }
    let n = values.len();
    let point = mean_of(values)?;
    let mut means = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("bootstrap/{rep}")));
        let mut sum = 0u64;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)] as u64;
        }
        means.push(sum as f64 / n as f64);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - level;
    let ci_low = quantile_sorted(&means, alpha / 2.0);
    let ci_high = quantile_sorted(&means, 1.0 - alpha / 2.0);
    Ok(BootstrapResult {
        point,
        ci_low,
        ci_high,
        reps,
        level,
        seed,
    })
}

/// Nearest-rank quantile of a sorted sample: the smallest element whose
/// empirical CDF reaches `p`. No interpolation, so endpoints are always
/// members of the resampled-statistic distribution.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let m = sorted.len();
    let rank = ((p * m as f64).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}
