//! End-to-end pipeline stages behind the CLI: validate, split, run, analyze.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::client::{
    derive_run_id, run_experiment, Backend, BackendError, Cache, CacheError, ExperimentRun,
    HttpBackend, MockBackend, MockPolicy, RateLimited, RunSpec,
};
use crate::config::{BackendConfig, Config, ConfigError, MockPolicyConfig};
use crate::corpus::{Corpus, CorpusError, MetaphorItem, SplitCorpus};
use crate::prompts::{Condition, PromptError, PromptRenderer, RationaleBank, TEMPLATE_VERSION};
use crate::report::{build_report, emit, AnalysisOptions, ReportBundle, ReportError, ReportFormat};
use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{} validation problem(s):\n{}", .0.len(), .0.join("\n"))]
    Diagnostics(Vec<String>),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Corpus, split, and bank, loaded and cross-validated per the config.
pub struct Inputs {
    pub corpus: Corpus,
    pub split: SplitCorpus,
    pub bank: RationaleBank,
}

pub fn load_inputs(config: &Config) -> Result<Inputs, PipelineError> {
    let mut corpus = match &config.corpus.exclusions {
        Some(exclusions) => {
            Corpus::load_with_exclusions(&config.corpus.path, config.corpus.format, exclusions)?
        }
        None => Corpus::load(&config.corpus.path, config.corpus.format)?,
    };
    if let Some(norms_path) = &config.corpus.norms {
        let norms = crate::corpus::load_norms_csv(norms_path)?;
        corpus.join_norms(&norms);
    }
    let corpus = corpus.filter_comprehensible(
        config.filter.comprehensibility_threshold,
        config.filter.apply_to,
    )?;
    let split = corpus.split(config.split.seed, config.split.sizes())?;
    let bank = RationaleBank::load(&config.prompts.bank, &corpus)?;
    Ok(Inputs {
        corpus,
        split,
        bank,
    })
}

/// What `validate` reports when everything checks out.
#[derive(Debug, Clone)]
pub struct ValidationSummary {
    pub n_records: usize,
    pub n_included: usize,
    pub corpus_digest: String,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub bank_items: usize,
    /// (condition, rendered sample prompt length in bytes)
    pub conditions: Vec<(Condition, usize)>,
}

impl fmt::Display for ValidationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "OK, {} items, {} conditions renderable",
            self.n_included,
            self.conditions.len()
        )?;
        writeln!(
            f,
            "  records: {} ({} after exclusions and filter)",
            self.n_records, self.n_included
        )?;
        writeln!(
            f,
            "  split: train {} / dev {} / test {}",
            self.train, self.dev, self.test
        )?;
        writeln!(f, "  corpus digest: {}", self.corpus_digest)?;
        writeln!(f, "  bank examples: {}", self.bank_items)?;
        for (condition, bytes) in &self.conditions {
            writeln!(f, "  {condition}: sample prompt {bytes} bytes")?;
        }
        Ok(())
    }
}

/// Load everything, run all invariant checks, and render one sample prompt
/// per condition. Violations are aggregated rather than reported one at a
/// time, so a broken bank surfaces every bad example at once.
pub fn validate(config: &Config) -> Result<ValidationSummary, PipelineError> {
    // corpus problems are fatal; nothing downstream can be checked without it
    let mut corpus = match &config.corpus.exclusions {
        Some(exclusions) => {
            Corpus::load_with_exclusions(&config.corpus.path, config.corpus.format, exclusions)?
        }
        None => Corpus::load(&config.corpus.path, config.corpus.format)?,
    };
    if let Some(norms_path) = &config.corpus.norms {
        let norms = crate::corpus::load_norms_csv(norms_path)?;
        corpus.join_norms(&norms);
    }
    let corpus = corpus.filter_comprehensible(
        config.filter.comprehensibility_threshold,
        config.filter.apply_to,
    )?;
    let split = corpus.split(config.split.seed, config.split.sizes())?;

    let mut diagnostics: Vec<String> = Vec::new();
    let bank = RationaleBank::load_unchecked(&config.prompts.bank)?;
    diagnostics.extend(bank.diagnostics(&corpus).iter().map(|e| e.to_string()));

    let mut conditions = Vec::new();
    match PromptRenderer::new(
        &corpus,
        &bank,
        &config.prompts.example_ids,
        &split,
        config.seeds.example_order,
    ) {
        Err(e) => diagnostics.push(e.to_string()),
        Ok(renderer) => {
            let sample_id = split
                .ids(config.run.split)
                .first()
                .or_else(|| split.test.first())
                .or_else(|| split.dev.first())
                .ok_or_else(|| PipelineError::Invalid("no items available to render".into()))?;
            let sample = corpus
                .get(sample_id)
                .expect("split ids come from the corpus");
            let letters = target_letters(config, sample);
            for condition in Condition::ALL {
                match renderer.render(condition, sample, &letters) {
                    Ok(rendered) => conditions.push((condition, rendered.text.len())),
                    Err(e) => diagnostics.push(format!("{condition}: {e}")),
                }
            }
        }
    }
    if !diagnostics.is_empty() {
        diagnostics.sort();
        diagnostics.dedup();
        return Err(PipelineError::Diagnostics(diagnostics));
    }
    Ok(ValidationSummary {
        n_records: corpus.len(),
        n_included: corpus.included_len(),
        corpus_digest: corpus.digest(),
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
        bank_items: bank.len(),
        conditions,
    })
}

fn target_letters(config: &Config, item: &MetaphorItem) -> crate::corpus::LetterAssignment {
    let policy = match config.seeds.letters {
        Some(seed) => crate::corpus::LetterPolicy::Shuffled(seed),
        None => crate::corpus::LetterPolicy::AsGiven,
    };
    crate::corpus::assign_letters(item, policy)
}

/// Construct the configured backend, wrapped with the rate limiter when one
/// is configured. The mock's corpus-aware policies get the answer key from
/// the loaded corpus.
pub fn build_backend(config: &Config, corpus: &Corpus) -> Result<Box<dyn Backend>, PipelineError> {
    let backend: Box<dyn Backend> = match &config.backend {
        BackendConfig::Mock { id, policy } => {
            let policy = match policy {
                MockPolicyConfig::AlwaysBest => MockPolicy::AlwaysBest,
                MockPolicyConfig::UniformRandom { seed } => {
                    MockPolicy::UniformRandom { seed: *seed }
                }
                MockPolicyConfig::FixedLetter { letter } => MockPolicy::FixedLetter(*letter),
                MockPolicyConfig::Scripted { script } => MockPolicy::Scripted {
                    responses: load_script(script)?,
                    fallback: None,
                },
            };
            Box::new(MockBackend::with_corpus(id.clone(), policy, corpus)?)
        }
        BackendConfig::Http {
            id,
            base_url,
            api,
            api_key_env,
            timeout_secs,
        } => Box::new(HttpBackend::new(
            id.clone(),
            base_url.clone(),
            *api,
            api_key_env.clone(),
            Duration::from_secs(*timeout_secs),
        )),
    };
    Ok(match config.run.rate_limit_rps {
        Some(rps) => Box::new(RateLimited::new(backend, rps)),
        None => backend,
    })
}

fn load_script(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    #[derive(serde::Deserialize)]
    struct Line {
        needle: String,
        completion: String,
    }
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: Line = serde_json::from_str(line)
            .map_err(|e| PipelineError::Invalid(format!("bad script line: {e}")))?;
        out.push((parsed.needle, parsed.completion));
    }
    Ok(out)
}

pub struct RunOutcome {
    pub runs: Vec<ExperimentRun>,
    pub manifest_paths: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn is_partial(&self) -> bool {
        self.runs.iter().any(|r| r.is_partial())
    }

    pub fn failed_items(&self) -> Vec<(Condition, String, String)> {
        self.runs
            .iter()
            .flat_map(|run| {
                run.failures
                    .iter()
                    .map(|f| (run.condition, f.item_id.clone(), f.error.clone()))
            })
            .collect()
    }
}

/// Render, execute, parse, and score every configured condition over the
/// configured split, writing one manifest per run. Items already cached are
/// not re-requested, so reruns are resumable and cheap.
pub fn run(
    config: &Config,
    condition_filter: Option<&[Condition]>,
) -> Result<RunOutcome, PipelineError> {
    let inputs = load_inputs(config)?;
    let backend = build_backend(config, &inputs.corpus)?;
    let cache = Cache::open(&config.run.cache_dir)?;
    let renderer = PromptRenderer::new(
        &inputs.corpus,
        &inputs.bank,
        &config.prompts.example_ids,
        &inputs.split,
        config.seeds.example_order,
    )?;
    let corpus_digest = inputs.corpus.digest();
    let items: Vec<&MetaphorItem> = inputs
        .split
        .ids(config.run.split)
        .iter()
        .map(|id| {
            inputs
                .corpus
                .get(id)
                .expect("split ids come from the corpus")
        })
        .collect();
    let params = config.params.to_request_params();

    let runs_dir = config.run.output_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_at(&runs_dir))?;

    let mut runs = Vec::new();
    let mut manifest_paths = Vec::new();
    for &condition in &config.run.conditions {
        if let Some(filter) = condition_filter {
            if !filter.contains(&condition) {
                continue;
            }
        }
        let spec = RunSpec {
            run_id: derive_run_id(
                config.backend.id(),
                &params.model,
                condition,
                config.run.split,
                &corpus_digest,
                TEMPLATE_VERSION,
                config.seeds.letters,
                config.seeds.example_order,
            ),
            condition,
            split_name: config.run.split,
            params: params.clone(),
            corpus_digest: corpus_digest.clone(),
            template_version: TEMPLATE_VERSION.to_string(),
            letters_seed: config.seeds.letters,
            example_order_seed: config.seeds.example_order,
            parallelism: config.run.parallelism,
            retry: config.retry.clone(),
        };
        let run = run_experiment(&spec, &renderer, &items, backend.as_ref(), &cache);
        let path = runs_dir.join(format!("{}.json", run.run_id));
        run.save(&path).map_err(io_at(&path))?;
        manifest_paths.push(path);
        runs.push(run);
    }
    if runs.is_empty() {
        return Err(PipelineError::Invalid(
            "no conditions matched the filter".into(),
        ));
    }
    Ok(RunOutcome {
        runs,
        manifest_paths,
    })
}

pub fn load_manifests(dir: &Path) -> Result<Vec<ExperimentRun>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(io_at(dir))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut runs = Vec::new();
    for path in paths {
        runs.push(ExperimentRun::load(&path).map_err(io_at(&path))?);
    }
    if runs.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no run manifests found in {}",
            dir.display()
        )));
    }
    Ok(runs)
}

pub struct AnalyzeOutcome {
    pub bundle: ReportBundle,
    pub files: Vec<PathBuf>,
}

/// Build the statistics report from stored manifests and write it in all
/// three formats under the output directory.
pub fn analyze(
    config: &Config,
    manifests_dir: Option<&Path>,
) -> Result<AnalyzeOutcome, PipelineError> {
    let inputs = load_inputs(config)?;
    let default_dir = config.run.output_dir.join("runs");
    let runs = load_manifests(manifests_dir.unwrap_or(&default_dir))?;
    let options = AnalysisOptions {
        bootstrap_reps: config.analysis.bootstrap_reps,
        bootstrap_seed: config.seeds.bootstrap,
        chance_reps: config.analysis.chance_reps,
        chance_seed: config.seeds.chance,
        level: config.analysis.level,
        gap_k: config.analysis.gap_k,
    };
    let bundle = build_report(&runs, &inputs.corpus, &options)?;
    let mut files = Vec::new();
    for format in [
        ReportFormat::Markdown,
        ReportFormat::Csv,
        ReportFormat::Json,
    ] {
        files.extend(emit(&bundle, format, &config.run.output_dir)?);
    }
    Ok(AnalyzeOutcome { bundle, files })
}
