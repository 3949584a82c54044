//! Comparison against the random-chance baseline.
//!
//! Selecting paraphrases uniformly at random gives an expected
//! appropriateness of 2.5. The test simulates `reps` means of n i.i.d.
//! uniform draws from {1,2,3,4} and reports the proportion at least as far
//! from 2.5 as the observed mean (two-sided).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::derive_seed;

use super::{mean_of, ScoreVector, StatsError};

/// Expected mean appropriateness under uniform random choice over 4 options.
pub const CHANCE_MEAN: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceTest {
    pub observed_mean: f64,
    pub n: usize,
    pub reps: usize,
    /// Simulated means at least as far from 2.5 as the observed mean.
    pub hits: usize,
    pub seed: u64,
}

impl ChanceTest {
    pub fn p_value(&self) -> f64 {
        self.hits as f64 / self.reps as f64
    }

    /// Rendered p-value; zero hits report as "< 1/reps" rather than 0.
    pub fn p_display(&self) -> String {
        if self.hits == 0 {
            format!("< {}", 1.0 / self.reps as f64)
        } else {
            format!("{}", self.p_value())
        }
    }
}

pub fn chance_test(scores: &ScoreVector, reps: usize, seed: u64) -> Result<ChanceTest, StatsError> {
    chance_test_values(&scores.values(), reps, seed)
}

pub fn chance_test_values(values: &[u8], reps: usize, seed: u64) -> Result<ChanceTest, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyScores);
    }
    if reps == 0 {
        return Err(StatsError::InvalidArgument("reps must be >= 1".into()));
    }
    let n = values.len();
    let observed_mean = mean_of(values)?;
    let observed_dev = (observed_mean - CHANCE_MEAN).abs();
    let mut hits = 0usize;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("chance/{rep}")));
        let mut sum = 0u64;
        for _ in 0..n {
            sum += rng.random_range(1..=4u64);
        }
        let sim_mean = sum as f64 / n as f64;
        if (sim_mean - CHANCE_MEAN).abs() >= observed_dev {
            hits += 1;
        }
    }
    Ok(ChanceTest {
        observed_mean,
        n,
        reps,
        hits,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: &[u8]) -> ScoreVector {
        let pairs = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("i{i:03}"), v))
            .collect();
        ScoreVector::new("run", pairs, 0).unwrap()
    }

    #[test]
    fn observed_mean_at_chance_gives_p_one() {
        // mean of repeated [1,2,3,4] is exactly 2.5; every simulated mean is
        // at least as extreme as a zero deviation
        let values: Vec<u8> = [1u8, 2, 3, 4].iter().copied().cycle().take(40).collect();
        let test = chance_test(&vector(&values), 2_000, 5).unwrap();
        assert_eq!(test.observed_mean, 2.5);
        assert_eq!(test.p_value(), 1.0);
    }

    #[test]
    fn all_best_gives_zero_hits() {
        // P(uniform mean over 150 draws = 4) = 4^-150; no simulated mean can
        // reach the observed deviation in any feasible number of reps
        let test = chance_test(&vector(&[4u8; 150]), 10_000, 5).unwrap();
        assert_eq!(test.hits, 0);
        assert!(test.p_value() < 1e-4);
        assert_eq!(test.p_display(), "< 0.0001");
    }

    #[test]
    fn deterministic_given_seed() {
        let values: Vec<u8> = (0..60).map(|i| (i % 4 + 1) as u8).collect();
        let a = chance_test(&vector(&values), 1_000, 9).unwrap();
        let b = chance_test(&vector(&values), 1_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_is_monotone_in_observed_deviation() {
        // same n, seed, reps: a mean further from 2.5 can only lose hits
        let near: Vec<u8> = [2u8, 3].iter().copied().cycle().take(100).collect(); // mean 2.5
        let mid: Vec<u8> = (0..100).map(|i| if i < 75 { 3 } else { 2 }).collect(); // mean 2.75
        let far: Vec<u8> = vec![4u8; 100]; // mean 4.0
        let p_near = chance_test(&vector(&near), 2_000, 3).unwrap().p_value();
        let p_mid = chance_test(&vector(&mid), 2_000, 3).unwrap().p_value();
        let p_far = chance_test(&vector(&far), 2_000, 3).unwrap().p_value();
        assert!(p_near >= p_mid);
        assert!(p_mid >= p_far);
    }

    #[test]
    fn empty_scores_error() {
        assert!(chance_test(&vector(&[]), 100, 1).is_err());
    }
}
