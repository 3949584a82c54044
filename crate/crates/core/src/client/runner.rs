//! Experiment execution: one condition over one split, fanned out over a
//! bounded worker pool, with per-item failure isolation.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{assign_letters, Letter, LetterPolicy, MetaphorItem, SplitName};
use crate::parser::{extract_answer, score_answer, Anchor};
use crate::prompts::{Condition, PromptRenderer};
use crate::stats::{ScoreVector, StatsError};
use crate::util::sha256_hex;

use super::{complete, Backend, Cache, RequestParams, RetryPolicy};

/// Everything an experiment run needs beyond the data itself.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub run_id: String,
    pub condition: Condition,
    pub split_name: SplitName,
    pub params: RequestParams,
    pub corpus_digest: String,
    pub template_version: String,
    /// None renders target options in stored order (as_given).
    pub letters_seed: Option<u64>,
    pub example_order_seed: u64,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

/// Deterministic run identity: same config, same id, so reruns overwrite
/// their own manifest instead of accumulating.
#[allow(clippy::too_many_arguments)]
pub fn derive_run_id(
    backend_id: &str,
    model: &str,
    condition: Condition,
    split: SplitName,
    corpus_digest: &str,
    template_version: &str,
    letters_seed: Option<u64>,
    example_order_seed: u64,
) -> String {
    let material = format!(
        "{backend_id}\n{model}\n{condition}\n{split}\n{corpus_digest}\n{template_version}\n{letters_seed:?}\n{example_order_seed}"
    );
    sha256_hex(material.as_bytes())[..12].to_string()
}

/// Outcome for one item: provenance plus the parsed, scored answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: String,
    pub prompt_digest: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    pub letter: Option<Letter>,
    pub matched_anchor: Anchor,
    pub appropriateness: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub error: String,
}

/// All records for one (condition, backend, split) triple; the manifest that
/// the statistics consume. Reconstructible from config plus a warm cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub run_id: String,
    pub condition: Condition,
    pub split: SplitName,
    pub backend_id: String,
    pub params: RequestParams,
    pub corpus_digest: String,
    pub template_version: String,
    pub letters_seed: Option<u64>,
    pub example_order_seed: u64,
    /// Example ids in prompt order.
    pub example_ids: Vec<String>,
    pub results: Vec<ItemResult>,
    pub failures: Vec<ItemFailure>,
}

impl ExperimentRun {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn n_invalid(&self) -> usize {
        self.results
            .iter()
            .filter(|r| r.appropriateness.is_none())
            .count()
    }

    pub fn n_cache_hits(&self) -> usize {
        self.results.iter().filter(|r| r.from_cache).count()
    }

    pub fn n_backend_calls(&self) -> usize {
        self.results.iter().filter(|r| !r.from_cache).count()
    }

    pub fn score_vector(&self) -> Result<ScoreVector, StatsError> {
        let pairs = self
            .results
            .iter()
            .filter_map(|r| r.appropriateness.map(|a| (r.item_id.clone(), a)))
            .collect();
        ScoreVector::new(self.run_id.clone(), pairs, self.n_invalid())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string_pretty(self).expect("run serializes");
        fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<ExperimentRun> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Run one condition over the given items. Items fan out over up to
/// `parallelism` workers; each failure is recorded without aborting the
/// run, and the stored result order is by item id regardless of completion
/// order.
pub fn run_experiment(
    spec: &RunSpec,
    renderer: &PromptRenderer,
    items: &[&MetaphorItem],
    backend: &dyn Backend,
    cache: &Cache,
) -> ExperimentRun {
    let results = Mutex::new(Vec::with_capacity(items.len()));
    let failures = Mutex::new(Vec::new());
    let cursor = AtomicUsize::new(0);
    let workers = spec.parallelism.max(1).min(items.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(index) else { break };
                match run_one(spec, renderer, item, backend, cache) {
                    Ok(result) => results.lock().expect("results lock").push(result),
                    Err(error) => failures.lock().expect("failures lock").push(ItemFailure {
                        item_id: item.id.clone(),
                        error,
                    }),
                }
            });
        }
    });

    let mut results = results.into_inner().expect("results lock");
    let mut failures = failures.into_inner().expect("failures lock");
    results.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    failures.sort_by(|a, b| a.item_id.cmp(&b.item_id));

    ExperimentRun {
        run_id: spec.run_id.clone(),
        condition: spec.condition,
        split: spec.split_name,
        backend_id: backend.id().to_string(),
        params: spec.params.clone(),
        corpus_digest: spec.corpus_digest.clone(),
        template_version: spec.template_version.clone(),
        letters_seed: spec.letters_seed,
        example_order_seed: spec.example_order_seed,
        example_ids: renderer.example_order().to_vec(),
        results,
        failures,
    }
}

fn run_one(
    spec: &RunSpec,
    renderer: &PromptRenderer,
    item: &MetaphorItem,
    backend: &dyn Backend,
    cache: &Cache,
) -> Result<ItemResult, String> {
    let policy = match spec.letters_seed {
        Some(seed) => LetterPolicy::Shuffled(seed),
        None => LetterPolicy::AsGiven,
    };
    let letters = assign_letters(item, policy);
    let prompt = renderer
        .render(spec.condition, item, &letters)
        .map_err(|e| e.to_string())?;
    let record = complete(
        backend,
        cache,
        spec.condition,
        &item.id,
        &prompt.text,
        &spec.params,
        &spec.retry,
    )
    .map_err(|e| e.to_string())?;
    let parsed = extract_answer(&record.completion_text);
    let scored = score_answer(&parsed, &prompt.letter_map, item).map_err(|e| e.to_string())?;
    Ok(ItemResult {
        item_id: item.id.clone(),
        prompt_digest: record.prompt_digest,
        from_cache: record.from_cache,
        latency_ms: record.latency_ms,
        letter: scored.letter,
        matched_anchor: parsed.matched_anchor,
        appropriateness: scored.appropriateness,
    })
}
