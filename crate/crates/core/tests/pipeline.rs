//! End-to-end pipeline behavior over the shipped sample data.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use metaphor_eval::client::{
    run_experiment, Backend, BackendError, Cache, ExperimentRun, RequestParams, RetryPolicy,
    RunSpec,
};
use metaphor_eval::config::{BackendConfig, MockPolicyConfig};
use metaphor_eval::corpus::{Corpus, CorpusFormat, Letter, SplitName};
use metaphor_eval::pipeline;
use metaphor_eval::prompts::{Condition, PromptRenderer, TEMPLATE_VERSION};
use metaphor_eval::report::{build_report, emit, AnalysisOptions, ReportFormat};

use common::shipped_config;

#[test]
fn shipped_corpus_mirrors_published_funnel() {
    let scratch = tempfile::tempdir().unwrap();
    let config = shipped_config(scratch.path());

    // raw records: 260 nonliterary + 204 literary
    let raw = Corpus::load(&config.corpus.path, CorpusFormat::Jsonl).unwrap();
    assert_eq!(raw.len(), 464);
    let literary = raw
        .items()
        .iter()
        .filter(|i| i.source == metaphor_eval::corpus::Source::Literary);
    assert_eq!(literary.count(), 204);

    // comprehensibility filter keeps exactly the 57 most comprehensible
    // literary metaphors
    let filtered = raw
        .filter_comprehensible(5.0, metaphor_eval::corpus::SourceFilter::Literary)
        .unwrap();
    let literary_kept = filtered
        .items()
        .iter()
        .filter(|i| i.source == metaphor_eval::corpus::Source::Literary)
        .count();
    assert_eq!(literary_kept, 57);

    // exclusions bring the analysis set to 280 = 230 nonliterary + 50 literary
    let inputs = pipeline::load_inputs(&config).unwrap();
    assert_eq!(inputs.corpus.included_len(), 280);
    let included_literary = inputs
        .corpus
        .included()
        .filter(|i| i.source == metaphor_eval::corpus::Source::Literary)
        .count();
    assert_eq!(included_literary, 50);
    assert_eq!(inputs.split.train.len(), 30);
    assert_eq!(inputs.split.dev.len(), 100);
    assert_eq!(inputs.split.test.len(), 150);
}

fn mini_spec(condition: Condition, parallelism: usize, corpus_digest: String) -> RunSpec {
    RunSpec {
        run_id: format!("test-{condition}-{parallelism}"),
        condition,
        split_name: SplitName::Test,
        params: RequestParams::new("mock"),
        corpus_digest,
        template_version: TEMPLATE_VERSION.to_string(),
        letters_seed: Some(7),
        example_order_seed: 11,
        parallelism,
        retry: RetryPolicy {
            max_retries: 1,
            base_backoff_ms: 1,
            max_backoff_ms: 2,
        },
    }
}

#[test]
fn parallelism_does_not_change_results() {
    let scratch = tempfile::tempdir().unwrap();
    let config = shipped_config(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let renderer = PromptRenderer::new(
        &inputs.corpus,
        &inputs.bank,
        &config.prompts.example_ids,
        &inputs.split,
        config.seeds.example_order,
    )
    .unwrap();
    let items: Vec<_> = inputs
        .split
        .test
        .iter()
        .map(|id| inputs.corpus.get(id).unwrap())
        .collect();
    let digest = inputs.corpus.digest();

    let run_with = |parallelism: usize, cache_dir: &Path| -> ExperimentRun {
        let backend = pipeline::build_backend(&config, &inputs.corpus).unwrap();
        let cache = Cache::open(cache_dir).unwrap();
        let spec = mini_spec(Condition::Qud, parallelism, digest.clone());
        run_experiment(&spec, &renderer, &items, backend.as_ref(), &cache)
    };
    let serial = run_with(1, &scratch.path().join("c1"));
    let parallel = run_with(8, &scratch.path().join("c8"));
    assert_eq!(serial.results.len(), 150);
    let strip = |run: &ExperimentRun| {
        run.results
            .iter()
            .map(|r| {
                (
                    r.item_id.clone(),
                    r.letter,
                    r.appropriateness,
                    r.prompt_digest.clone(),
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&serial), strip(&parallel));
}

/// Backend that fails permanently for one specific item's prompt.
struct FailsOne {
    needle: String,
}

impl Backend for FailsOne {
    fn id(&self) -> &str {
        "fails-one"
    }

    fn complete_once(&self, prompt: &str, _params: &RequestParams) -> Result<String, BackendError> {
        if prompt.contains(&self.needle) {
            return Err(BackendError::Status {
                status: 400,
                body: "nope".into(),
            });
        }
        Ok("The answer is a) whatever.".to_string())
    }
}

#[test]
fn one_failing_item_does_not_abort_the_run() {
    let scratch = tempfile::tempdir().unwrap();
    let config = shipped_config(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let renderer = PromptRenderer::new(
        &inputs.corpus,
        &inputs.bank,
        &config.prompts.example_ids,
        &inputs.split,
        config.seeds.example_order,
    )
    .unwrap();
    let items: Vec<_> = inputs
        .split
        .test
        .iter()
        .map(|id| inputs.corpus.get(id).unwrap())
        .collect();
    let victim = items[17];
    let backend = FailsOne {
        needle: victim.sentence.clone(),
    };
    let cache = Cache::open(scratch.path().join("cache")).unwrap();
    let spec = mini_spec(Condition::Qud, 4, inputs.corpus.digest());
    let run = run_experiment(&spec, &renderer, &items, &backend, &cache);
    assert_eq!(run.results.len(), 149);
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].item_id, victim.id);
    assert!(run.is_partial());
    assert!(run.failures[0].error.contains("400"));
}

#[test]
fn fixed_letter_mock_scores_through_letter_map() {
    let scratch = tempfile::tempdir().unwrap();
    let mut config = shipped_config(scratch.path());
    config.backend = BackendConfig::Mock {
        id: "mock-c".into(),
        policy: MockPolicyConfig::FixedLetter { letter: Letter::C },
    };
    config.run.conditions = vec![Condition::OptionsOnly];
    let outcome = pipeline::run(&config, None).unwrap();
    let run = &outcome.runs[0];
    assert!(!run.is_partial());
    // every answer is letter c; the score is whatever paraphrase c maps to
    assert!(run.results.iter().all(|r| r.letter == Some(Letter::C)));
    assert!(run.results.iter().all(|r| r.appropriateness.is_some()));
    // shuffled letters put appropriateness 4 at c for roughly a quarter
    let fours = run
        .results
        .iter()
        .filter(|r| r.appropriateness == Some(4))
        .count();
    assert!((15..=60).contains(&fours), "fours = {fours} out of 150");
}

#[test]
fn scripted_mock_produces_invalid_responses() {
    let scratch = tempfile::tempdir().unwrap();
    let mut config = shipped_config(scratch.path());
    let script = scratch.path().join("script.jsonl");
    // the empty needle matches every prompt, so every completion is the
    // unparseable sentence
    std::fs::write(
        &script,
        concat!(
            r#"{"needle": "", "completion": "I think both options are plausible."}"#,
            "\n"
        ),
    )
    .unwrap();
    config.backend = BackendConfig::Mock {
        id: "mock-scripted".into(),
        policy: MockPolicyConfig::Scripted { script },
    };
    config.run.conditions = vec![Condition::NoRationale];
    let outcome = pipeline::run(&config, None).unwrap();
    let run = &outcome.runs[0];
    assert!(!run.is_partial());
    // unparseable completions are a valid outcome: invalid, not a failure
    assert_eq!(run.n_invalid(), 150);
    let vector = run.score_vector().unwrap();
    assert_eq!(vector.n_invalid, 150);
    assert_eq!(vector.n_valid(), 0);
}

fn six_uniform_runs(scratch: &Path) -> (metaphor_eval::config::Config, Vec<ExperimentRun>) {
    let mut config = shipped_config(scratch);
    config.backend = BackendConfig::Mock {
        id: "mock-rand".into(),
        policy: MockPolicyConfig::UniformRandom { seed: 31 },
    };
    let outcome = pipeline::run(&config, None).unwrap();
    (config, outcome.runs)
}

fn default_options(config: &metaphor_eval::config::Config) -> AnalysisOptions {
    AnalysisOptions {
        bootstrap_reps: 500,
        bootstrap_seed: config.seeds.bootstrap,
        chance_reps: 500,
        chance_seed: config.seeds.chance,
        level: 0.95,
        gap_k: config.analysis.gap_k,
    }
}

#[test]
fn report_rejects_mismatched_corpus_digest() {
    let scratch = tempfile::tempdir().unwrap();
    let (config, mut runs) = six_uniform_runs(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    runs[2].corpus_digest = "0000deadbeef".into();
    let err = build_report(&runs, &inputs.corpus, &default_options(&config)).unwrap_err();
    assert!(matches!(
        err,
        metaphor_eval::report::ReportError::DigestMismatch { .. }
    ));
}

#[test]
fn report_rejects_duplicate_condition_runs() {
    let scratch = tempfile::tempdir().unwrap();
    let (config, mut runs) = six_uniform_runs(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let dup = runs[0].clone();
    runs.push(dup);
    let err = build_report(&runs, &inputs.corpus, &default_options(&config)).unwrap_err();
    assert!(matches!(
        err,
        metaphor_eval::report::ReportError::DuplicateRun { .. }
    ));
}

#[test]
fn single_run_omits_correlations_with_notice() {
    let scratch = tempfile::tempdir().unwrap();
    let mut config = shipped_config(scratch.path());
    config.backend = BackendConfig::Mock {
        id: "mock-rand".into(),
        policy: MockPolicyConfig::UniformRandom { seed: 31 },
    };
    config.run.conditions = vec![Condition::Qud];
    let outcome = pipeline::run(&config, None).unwrap();
    let inputs = pipeline::load_inputs(&config).unwrap();
    let bundle = build_report(&outcome.runs, &inputs.corpus, &default_options(&config)).unwrap();
    assert!(bundle.models[0].correlations.is_empty());
    assert!(bundle
        .notes
        .iter()
        .any(|n| n.contains("correlation matrix omitted")));
    // mean, CI, chance p, and histogram are still present
    let report = &bundle.models[0].conditions[0];
    assert!(report.mean.is_some());
    assert!(report.bootstrap.is_some());
    assert!(report.chance.is_some());
}

#[test]
fn markdown_always_best_row_format() {
    let scratch = tempfile::tempdir().unwrap();
    let config = shipped_config(scratch.path());
    pipeline::run(&config, None).unwrap();
    pipeline::analyze(&config, None).unwrap();
    let markdown = std::fs::read_to_string(config.run.output_dir.join("report.md")).unwrap();
    assert!(
        markdown.contains("| mock-best | 4.00 [4.00, 4.00] |"),
        "always-best mean row renders with a degenerate CI"
    );
}

#[test]
fn json_bundle_round_trips() {
    let scratch = tempfile::tempdir().unwrap();
    let (config, runs) = six_uniform_runs(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let bundle = build_report(&runs, &inputs.corpus, &default_options(&config)).unwrap();
    let json = serde_json::to_string(&bundle).unwrap();
    let back: metaphor_eval::report::ReportBundle = serde_json::from_str(&json).unwrap();
    assert_eq!(bundle, back);
}

#[test]
fn csv_histogram_sums_to_valid_count() {
    let scratch = tempfile::tempdir().unwrap();
    let (config, runs) = six_uniform_runs(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let bundle = build_report(&runs, &inputs.corpus, &default_options(&config)).unwrap();
    let files = emit(&bundle, ReportFormat::Csv, &config.run.output_dir).unwrap();
    let histogram_path = files
        .iter()
        .find(|p| p.file_name().is_some_and(|n| n == "histograms.csv"))
        .unwrap();
    let content = std::fs::read_to_string(histogram_path).unwrap();
    let mut checked = 0;
    for line in content.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bins: usize = cols[2..6].iter().map(|v| v.parse::<usize>().unwrap()).sum();
        let condition = cols[1];
        let run = runs
            .iter()
            .find(|r| r.condition.name() == condition)
            .unwrap();
        assert_eq!(bins, run.score_vector().unwrap().n_valid());
        checked += 1;
    }
    assert_eq!(checked, 6);
}

#[test]
fn norms_join_fills_missing_values() {
    let scratch = tempfile::tempdir().unwrap();
    let corpus_path = scratch.path().join("corpus.jsonl");
    std::fs::write(
        &corpus_path,
        concat!(
            r#"{"id": "x1", "sentence": "A kettle is a rooster.", "subject": "A kettle", "object": "a rooster", "source": "literary", "paraphrases": [{"text": "A kettle is announcing readiness.", "appropriateness": 4}, {"text": "A kettle is noisy.", "appropriateness": 3}, {"text": "A kettle is a vessel for boiling.", "appropriateness": 2}, {"text": "A kettle is silent.", "appropriateness": 1}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let norms_path = scratch.path().join("norms.csv");
    std::fs::write(
        &norms_path,
        "id,comprehensibility,familiarity\nx1,5.5,3.25\n",
    )
    .unwrap();
    let mut corpus = Corpus::load(&corpus_path, CorpusFormat::Jsonl).unwrap();
    assert!(corpus.items()[0].comprehensibility.is_none());
    let norms = metaphor_eval::corpus::load_norms_csv(&norms_path).unwrap();
    corpus.join_norms(&norms);
    assert_eq!(corpus.items()[0].comprehensibility, Some(5.5));
    assert_eq!(corpus.items()[0].familiarity, Some(3.25));
}

#[test]
fn uniform_random_histogram_is_roughly_flat() {
    // binomial bound: each bin within 3 standard deviations of n/4
    let scratch = tempfile::tempdir().unwrap();
    let (_, runs) = six_uniform_runs(scratch.path());
    let mut counts = [0usize; 4];
    let mut total = 0usize;
    for run in &runs {
        for r in &run.results {
            let a = r.appropriateness.unwrap();
            counts[a as usize - 1] += 1;
            total += 1;
        }
    }
    assert_eq!(total, 900);
    let expected = total as f64 / 4.0;
    let sd = (total as f64 * 0.25 * 0.75).sqrt();
    for (bin, &count) in counts.iter().enumerate() {
        assert!(
            (count as f64 - expected).abs() < 3.0 * sd,
            "bin {bin} count {count} vs expected {expected}"
        );
    }
}

#[test]
fn letters_seed_changes_prompt_digests_but_not_best_scores() {
    let scratch = tempfile::tempdir().unwrap();
    let mut config = shipped_config(scratch.path());
    config.run.conditions = vec![Condition::NoRationale];
    let first = pipeline::run(&config, None).unwrap();

    config.seeds.letters = Some(8);
    config.run.cache_dir = scratch.path().join("cache2");
    config.run.output_dir = scratch.path().join("out2");
    let second = pipeline::run(&config, None).unwrap();

    let digests = |runs: &[ExperimentRun]| {
        runs[0]
            .results
            .iter()
            .map(|r| r.prompt_digest.clone())
            .collect::<Vec<_>>()
    };
    assert_ne!(digests(&first.runs), digests(&second.runs));
    // the always-best mock still lands on appropriateness 4 everywhere
    assert!(second.runs[0]
        .results
        .iter()
        .all(|r| r.appropriateness == Some(4)));
}

#[test]
fn familiarity_map_drives_ordinal_and_gap_cells() {
    let scratch = tempfile::tempdir().unwrap();
    let (config, runs) = six_uniform_runs(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let bundle = build_report(&runs, &inputs.corpus, &default_options(&config)).unwrap();
    for report in &bundle.models[0].conditions {
        let fit = report.familiarity_effect.as_ref().expect("fit present");
        // uniform random scores: no real familiarity effect at n=150
        assert!(fit.beta.abs() < 1.0);
        assert!(report.familiarity_gap.is_some());
    }
    // cross-check one gap cell against a direct computation
    let familiarity: BTreeMap<String, f64> = inputs
        .corpus
        .items()
        .iter()
        .filter_map(|i| i.familiarity.map(|f| (i.id.clone(), f)))
        .collect();
    let scores = runs[0].score_vector().unwrap();
    let direct = metaphor_eval::stats::familiarity_gap(&scores, &familiarity, 30).unwrap();
    let cell = bundle.models[0]
        .conditions
        .iter()
        .find(|c| c.condition == runs[0].condition)
        .unwrap();
    assert_eq!(cell.familiarity_gap, Some(direct));
}

#[test]
fn validate_aggregates_all_bank_problems() {
    let scratch = tempfile::tempdir().unwrap();
    let mut config = shipped_config(scratch.path());
    // break two different examples in two different ways
    let original = std::fs::read_to_string(repo_root_data().join("rationale_bank.jsonl")).unwrap();
    let broken: String = original
        .lines()
        .map(|line| {
            if line.contains(r#""item_id": "nl001""#) && line.contains(r#""condition": "qud""#) {
                r#"{"item_id": "nl001", "condition": "qud", "body": "No clause here."}"#.to_string()
            } else if line.contains(r#""item_id": "nl006""#)
                && line.contains(r#""condition": "similarity""#)
            {
                // names letter a, but nl006's best paraphrase sits at c
                r#"{"item_id": "nl006", "condition": "similarity", "body": "A shark is ruthless. A lawyer is also ruthless, so the speaker is saying a) a lawyer is ruthless."}"#
                    .to_string()
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let bank_path = scratch.path().join("bank.jsonl");
    std::fs::write(&bank_path, broken).unwrap();
    config.prompts.bank = bank_path;
    let err = pipeline::validate(&config).unwrap_err();
    match err {
        pipeline::PipelineError::Diagnostics(problems) => {
            assert!(problems
                .iter()
                .any(|p| p.contains("nl001") && p.contains("no answer clause")));
            assert!(problems
                .iter()
                .any(|p| p.contains("nl006") && p.contains("letter map")));
        }
        other => panic!("expected aggregated diagnostics, got {other}"),
    }
}

fn repo_root_data() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .canonicalize()
        .unwrap()
}

#[test]
fn template_v1_bytes_are_frozen() {
    // golden snapshot of the prompt byte layout; if this fails, the template
    // changed and TEMPLATE_VERSION must be bumped along with this digest
    let scratch = tempfile::tempdir().unwrap();
    let config = shipped_config(scratch.path());
    let inputs = pipeline::load_inputs(&config).unwrap();
    let renderer = PromptRenderer::new(
        &inputs.corpus,
        &inputs.bank,
        &config.prompts.example_ids,
        &inputs.split,
        config.seeds.example_order,
    )
    .unwrap();
    let target = inputs.corpus.get(&inputs.split.test[0]).unwrap();
    let letters =
        metaphor_eval::corpus::assign_letters(target, metaphor_eval::corpus::LetterPolicy::AsGiven);
    let prompt = renderer
        .render(Condition::Similarity, target, &letters)
        .unwrap();
    assert_eq!(prompt.template_version, TEMPLATE_VERSION);
    use sha2::{Digest, Sha256};
    let digest: String = Sha256::digest(prompt.text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(target.id, "nl171");
    assert_eq!(prompt.text.len(), 3033);
    assert_eq!(
        digest,
        "a8b9be48b2b3da2bb63e7c8eba812841ce6e99080b1070e37eb9d348248f17de"
    );
}
