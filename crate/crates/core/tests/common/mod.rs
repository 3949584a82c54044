//! Helpers shared by the integration and acceptance suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use metaphor_eval::config::Config;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("repo root resolves")
}

/// The shipped default configuration, with cache and output redirected into
/// a scratch directory so tests never touch the working tree.
pub fn shipped_config(scratch: &Path) -> Config {
    let mut config = Config::load(&repo_root().join("config.toml")).expect("shipped config loads");
    config.run.cache_dir = scratch.join("cache");
    config.run.output_dir = scratch.join("out");
    config
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse-CDF sampler from the proportional-odds model: the independent
/// generator used to test slope recovery.
pub fn sample_proportional_odds(x: &[f64], beta: f64, thresholds: [f64; 3], seed: u64) -> Vec<u8> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|&xi| {
            let u: f64 = rng.random();
            let mut y = 1u8;
            for &t in &thresholds {
                if u > sigmoid(t - beta * xi) {
                    y += 1;
                }
            }
            y
        })
        .collect()
}

/// Standard normal draws via Box-Muller from a seeded stream.
pub fn standard_normals(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}
