//! Statistics over scored runs: means with bootstrap intervals, chance
//! permutation tests, Pearson correlations, proportional-odds regression on
//! familiarity, and familiarity-gap contrasts.
//!
//! Every stochastic procedure here is a pure function of (data, seed, reps).
//! Replicate-level RNG streams are derived from (seed, replicate index), so
//! results do not depend on evaluation order.

mod bootstrap;
mod chance;
mod ordinal;
mod pearson;

pub use bootstrap::{bootstrap_ci, bootstrap_ci_values, BootstrapResult};
pub use chance::{chance_test, chance_test_values, ChanceTest, CHANCE_MEAN};
pub use ordinal::{fit_ordinal, standardize, OrdinalFit, OrdinalModel};
pub use pearson::{correlate_runs, pearson, PearsonResult};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("no valid scores")]
    EmptyScores,
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("score lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("duplicate item id {0} in score vector")]
    DuplicateItem(String),
    #[error("appropriateness {value} out of range for item {id}")]
    OutOfRange { id: String, value: u8 },
    #[error("missing predictor value for item {0}")]
    MissingPredictor(String),
    #[error("need at least 2 outcome categories, got {0}")]
    TooFewCategories(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Valid appropriateness scores from one run, keyed by item, plus the count
/// of invalid responses that were excluded from analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub run_id: String,
    pub pairs: Vec<(String, u8)>,
    pub n_invalid: usize,
}

impl ScoreVector {
    pub fn new(
        run_id: impl Into<String>,
        pairs: Vec<(String, u8)>,
        n_invalid: usize,
    ) -> Result<Self, StatsError> {
        let mut seen = std::collections::BTreeSet::new();
        for (id, value) in &pairs {
            if !(1..=4).contains(value) {
                return Err(StatsError::OutOfRange {
                    id: id.clone(),
                    value: *value,
                });
            }
            if !seen.insert(id.clone()) {
                return Err(StatsError::DuplicateItem(id.clone()));
            }
        }
        Ok(ScoreVector {
            run_id: run_id.into(),
            pairs,
            n_invalid,
        })
    }

    pub fn values(&self) -> Vec<u8> {
        self.pairs.iter().map(|(_, v)| *v).collect()
    }

    pub fn n_valid(&self) -> usize {
        self.pairs.len()
    }

    pub fn by_item(&self) -> BTreeMap<&str, u8> {
        self.pairs.iter().map(|(id, v)| (id.as_str(), *v)).collect()
    }
}

/// Arithmetic mean over the valid scores.
pub fn mean_appropriateness(scores: &ScoreVector) -> Result<f64, StatsError> {
    mean_of(&scores.values())
}

pub(crate) fn mean_of(values: &[u8]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyScores);
    }
    Ok(values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64)
}

/// Counts per appropriateness value 1..=4. Invalid responses are not in the
/// histogram; they stay in `ScoreVector::n_invalid`.
pub fn histogram(scores: &ScoreVector) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for (_, v) in &scores.pairs {
        counts[*v as usize - 1] += 1;
    }
    counts
}

/// Mean appropriateness over the k most familiar items minus the mean over
/// the k least familiar. Ties in familiarity break by item id, so the
/// contrast is deterministic.
pub fn familiarity_gap(
    scores: &ScoreVector,
    familiarity: &BTreeMap<String, f64>,
    k: usize,
) -> Result<f64, StatsError> {
    if k == 0 {
        return Err(StatsError::InvalidArgument("k must be positive".into()));
    }
    let mut with_norm: Vec<(&str, u8, f64)> = scores
        .pairs
        .iter()
        .filter_map(|(id, v)| familiarity.get(id).map(|&f| (id.as_str(), *v, f)))
        .collect();
    if with_norm.len() < 2 * k {
        return Err(StatsError::InsufficientData {
            needed: 2 * k,
            got: with_norm.len(),
        });
    }
    with_norm.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(b.0))
    });
    let top: Vec<u8> = with_norm.iter().take(k).map(|&(_, v, _)| v).collect();
    let bottom: Vec<u8> = with_norm.iter().rev().take(k).map(|&(_, v, _)| v).collect();
    Ok(mean_of(&top)? - mean_of(&bottom)?)
}
