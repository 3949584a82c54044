//! Declarative run configuration.
//!
//! Everything that shapes a run lives in one TOML file so runs are
//! archivable and diffable: data paths, filter threshold, split sizes and
//! seed, conditions, backend, request parameters, retry policy, and every
//! RNG seed. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::{HttpApi, RequestParams, RetryPolicy};
use crate::corpus::{CorpusFormat, Letter, SourceFilter, SplitName, SplitSizes};
use crate::prompts::Condition;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub prompts: PromptsConfig,
    pub run: RunConfig,
    pub backend: BackendConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub seeds: SeedsConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub format: CorpusFormat,
    #[serde(default)]
    pub exclusions: Option<PathBuf>,
    /// Optional columnar norms file joined by item id at load.
    #[serde(default)]
    pub norms: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub comprehensibility_threshold: f64,
    pub apply_to: SourceFilter,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            comprehensibility_threshold: 5.0,
            apply_to: SourceFilter::Literary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitConfig {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes::new(self.train, self.dev, self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    pub bank: PathBuf,
    /// The ten example metaphors, by id; all must sit in the training split.
    pub example_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub conditions: Vec<Condition>,
    pub split: SplitName,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Optional token-bucket rate limit on backend calls.
    #[serde(default)]
    pub rate_limit_rps: Option<f64>,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum BackendConfig {
    Mock {
        id: String,
        policy: MockPolicyConfig,
    },
    Http {
        id: String,
        base_url: String,
        api: HttpApi,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendConfig {
    pub fn id(&self) -> &str {
        match self {
            BackendConfig::Mock { id, .. } => id,
            BackendConfig::Http { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "name")]
pub enum MockPolicyConfig {
    AlwaysBest,
    UniformRandom { seed: u64 },
    FixedLetter { letter: Letter },
    Scripted { script: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_max_tokens() -> u32 {
    256
}

impl ParamsConfig {
    pub fn to_request_params(&self) -> RequestParams {
        RequestParams {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            stop: self.stop.clone(),
            extra: self.extra.clone(),
        }
    }
}

/// Every RNG seed in the pipeline, explicit. No ambient randomness anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsConfig {
    /// Target option-letter shuffle; omit to keep options in stored order.
    #[serde(default)]
    pub letters: Option<u64>,
    pub example_order: u64,
    pub bootstrap: u64,
    pub chance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bootstrap_reps: usize,
    pub chance_reps: usize,
    pub level: f64,
    pub gap_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bootstrap_reps: 10_000,
            chance_reps: 10_000,
            level: 0.95,
            gap_k: 30,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse { msg, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    /// Parse a config from memory without resolving or checking paths.
    pub fn from_toml_str(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<toml>".to_string(),
            msg: e.to_string(),
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.corpus.path);
        if let Some(p) = self.corpus.exclusions.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.corpus.norms.as_mut() {
            resolve(p);
        }
        resolve(&mut self.prompts.bank);
        resolve(&mut self.run.cache_dir);
        resolve(&mut self.run.output_dir);
        if let BackendConfig::Mock {
            policy: MockPolicyConfig::Scripted { script },
            ..
        } = &mut self.backend
        {
            resolve(script);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.corpus.path.exists() {
            return Err(ConfigError::Invalid(format!(
                "corpus path {} does not exist",
                self.corpus.path.display()
            )));
        }
        for (label, path) in [
            ("exclusion list", &self.corpus.exclusions),
            ("norms file", &self.corpus.norms),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!(
                        "{label} {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if !self.prompts.bank.exists() {
            return Err(ConfigError::Invalid(format!(
                "rationale bank {} does not exist",
                self.prompts.bank.display()
            )));
        }
        if self.run.conditions.is_empty() {
            return Err(ConfigError::Invalid("no conditions configured".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.run.conditions {
            if !seen.insert(*c) {
                return Err(ConfigError::Invalid(format!("condition {c} listed twice")));
            }
        }
        if self.analysis.bootstrap_reps == 0 || self.analysis.chance_reps == 0 {
            return Err(ConfigError::Invalid("analysis reps must be >= 1".into()));
        }
        if !(0.0 < self.analysis.level && self.analysis.level < 1.0) {
            return Err(ConfigError::Invalid(
                "analysis level must be in (0, 1)".into(),
            ));
        }
        if let Some(rps) = self.run.rate_limit_rps {
            if !rps.is_finite() || rps <= 0.0 {
                return Err(ConfigError::Invalid(
                    "rate_limit_rps must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}
