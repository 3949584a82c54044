//! Report assembly: regenerate every results table from stored run
//! manifests, in Markdown, CSV, and JSON.
//!
//! A bundle is a pure function of (manifests, corpus, analysis options);
//! regenerating from the same inputs is byte-identical. Human formats round
//! to two decimals; the JSON bundle keeps full precision and round-trips to
//! an equal in-memory value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::ExperimentRun;
use crate::corpus::{Corpus, SplitName};
use crate::prompts::Condition;
use crate::stats::{
    bootstrap_ci, chance_test, correlate_runs, familiarity_gap, fit_ordinal, histogram,
    mean_appropriateness, BootstrapResult, ChanceTest, OrdinalFit, ScoreVector, StatsError,
};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no run manifests to report on")]
    Empty,
    #[error("corpus digest mismatch: run {run_id} has {run_digest}, expected {expected}")]
    DigestMismatch {
        run_id: String,
        run_digest: String,
        expected: String,
    },
    #[error("duplicate runs for backend {backend_id}, condition {condition}")]
    DuplicateRun {
        backend_id: String,
        condition: Condition,
    },
    #[error("template version mismatch: run {run_id} has {run_version}, expected {expected}")]
    TemplateMismatch {
        run_id: String,
        run_version: String,
        expected: String,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Seeds and repetition counts the analysis ran with; embedded in the
/// bundle for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bootstrap_reps: usize,
    pub bootstrap_seed: u64,
    pub chance_reps: usize,
    pub chance_seed: u64,
    pub level: f64,
    pub gap_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub letters: Option<u64>,
    pub example_order: u64,
}

/// Per-(model, condition) results: everything one column of the paper's
/// tables needs, traceable to its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub run_id: String,
    pub split: SplitName,
    pub n_results: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
    pub n_failures: usize,
    pub mean: Option<f64>,
    pub bootstrap: Option<BootstrapResult>,
    pub chance: Option<ChanceTest>,
    pub histogram: [usize; 4],
    pub familiarity_effect: Option<OrdinalFit>,
    pub familiarity_note: Option<String>,
    pub familiarity_gap: Option<f64>,
    pub gap_note: Option<String>,
    pub seeds: RunSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub a: Condition,
    pub b: Condition,
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// Row label: the backend id of the runs.
    pub label: String,
    pub model: String,
    pub conditions: Vec<ConditionReport>,
    /// Upper triangle of the condition-by-condition correlation matrix;
    /// absent with a note when fewer than two conditions have runs.
    pub correlations: Vec<CorrelationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub corpus_digest: String,
    pub template_version: String,
    pub options: AnalysisOptions,
    pub models: Vec<ModelReport>,
    pub notes: Vec<String>,
}

/// Assemble the full report from run manifests.
///
/// All manifests must share the corpus digest (and match `corpus`) and the
/// template version; (backend, condition) pairs must be unique. Conditions
/// without runs are absent from the bundle, never rendered as zeros.
pub fn build_report(
    runs: &[ExperimentRun],
    corpus: &Corpus,
    options: &AnalysisOptions,
) -> Result<ReportBundle, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::Empty);
    }
    let expected_digest = corpus.digest();
    let template_version = runs[0].template_version.clone();
    for run in runs {
        if run.corpus_digest != expected_digest {
            return Err(ReportError::DigestMismatch {
                run_id: run.run_id.clone(),
                run_digest: run.corpus_digest.clone(),
                expected: expected_digest,
            });
        }
        if run.template_version != template_version {
            return Err(ReportError::TemplateMismatch {
                run_id: run.run_id.clone(),
                run_version: run.template_version.clone(),
                expected: template_version,
            });
        }
    }

    let familiarity: BTreeMap<String, f64> = corpus
        .items()
        .iter()
        .filter_map(|item| item.familiarity.map(|f| (item.id.clone(), f)))
        .collect();

    // group by backend id, keep Condition::ALL ordering inside each group
    let mut grouped: BTreeMap<&str, Vec<&ExperimentRun>> = BTreeMap::new();
    for run in runs {
        let group = grouped.entry(&run.backend_id).or_default();
        if group.iter().any(|r| r.condition == run.condition) {
            return Err(ReportError::DuplicateRun {
                backend_id: run.backend_id.clone(),
                condition: run.condition,
            });
        }
        group.push(run);
    }

    let mut notes = Vec::new();
    let mut models = Vec::new();
    for (label, group) in grouped {
        let mut condition_reports = Vec::new();
        let mut vectors: Vec<(Condition, ScoreVector)> = Vec::new();
        for condition in Condition::ALL {
            let Some(run) = group.iter().find(|r| r.condition == condition) else {
                continue;
            };
            let scores = run.score_vector()?;
            let report = condition_report(run, &scores, &familiarity, options);
            if scores.n_valid() > 0 {
                vectors.push((condition, scores));
            }
            condition_reports.push(report);
        }
        let correlations = if vectors.len() >= 2 {
            correlation_cells(&vectors)
        } else {
            notes.push(format!(
                "correlation matrix omitted for {label}: fewer than two conditions with runs"
            ));
            Vec::new()
        };
        models.push(ModelReport {
            label: label.to_string(),
            model: group[0].params.model.clone(),
            conditions: condition_reports,
            correlations,
        });
    }

    Ok(ReportBundle {
        corpus_digest: expected_digest,
        template_version,
        options: options.clone(),
        models,
        notes,
    })
}

fn condition_report(
    run: &ExperimentRun,
    scores: &ScoreVector,
    familiarity: &BTreeMap<String, f64>,
    options: &AnalysisOptions,
) -> ConditionReport {
    let mean = mean_appropriateness(scores).ok();
    let bootstrap = bootstrap_ci(
        scores,
        options.bootstrap_reps,
        options.level,
        options.bootstrap_seed,
    )
    .ok();
    let chance = chance_test(scores, options.chance_reps, options.chance_seed).ok();
    let (familiarity_effect, familiarity_note) = match fit_ordinal(scores, familiarity) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (gap, gap_note) = match familiarity_gap(scores, familiarity, options.gap_k) {
        Ok(g) => (Some(g), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ConditionReport {
        condition: run.condition,
        run_id: run.run_id.clone(),
        split: run.split,
        n_results: run.results.len(),
        n_valid: scores.n_valid(),
        n_invalid: scores.n_invalid,
        n_failures: run.failures.len(),
        mean,
        bootstrap,
        chance,
        histogram: histogram(scores),
        familiarity_effect,
        familiarity_note,
        familiarity_gap: gap,
        gap_note,
        seeds: RunSeeds {
            letters: run.letters_seed,
            example_order: run.example_order_seed,
        },
    }
}

fn correlation_cells(vectors: &[(Condition, ScoreVector)]) -> Vec<CorrelationCell> {
    let mut cells = Vec::new();
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            if let Ok(result) = correlate_runs(&vectors[i].1, &vectors[j].1) {
                cells.push(CorrelationCell {
                    a: vectors[i].0,
                    b: vectors[j].0,
                    r: result.r,
                    p: result.p,
                    n: result.n,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

/// Write the bundle in one format under `out_dir`. Markdown becomes
/// report.md, JSON report.json, CSV a tables/ directory. Returns the files
/// written.
pub fn emit(
    bundle: &ReportBundle,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source: std::io::Error| ReportError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            let json = serde_json::to_string_pretty(bundle).expect("bundle serializes");
            fs::write(&path, json.as_bytes()).map_err(io_err(&path))?;
            Ok(vec![path])
        }
        ReportFormat::Markdown => {
            let path = out_dir.join("report.md");
            fs::write(&path, to_markdown(bundle).as_bytes()).map_err(io_err(&path))?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let tables = out_dir.join("tables");
            fs::create_dir_all(&tables).map_err(io_err(&tables))?;
            let mut written = Vec::new();
            for (name, content) in csv_tables(bundle) {
                let path = tables.join(name);
                fs::write(&path, content.as_bytes()).map_err(io_err(&path))?;
                written.push(path);
            }
            Ok(written)
        }
    }
}

pub fn load_bundle(path: &Path) -> Result<ReportBundle, ReportError> {
    let bytes = fs::read(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// The paper's asterisk convention: * p < .05, ** p < .001.
fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn chance_p_string(c: &ChanceTest) -> String {
    if c.hits == 0 {
        format!("< {}", 1.0 / c.reps as f64)
    } else {
        fmt_p(c.p_value())
    }
}

pub fn to_markdown(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    let opts = &bundle.options;
    out.push_str("# Metaphor paraphrase evaluation report\n\n");
    let _ = writeln!(out, "- corpus digest: `{}`", bundle.corpus_digest);
    let _ = writeln!(out, "- template version: `{}`", bundle.template_version);
    let _ = writeln!(
        out,
        "- bootstrap: {} reps at level {}, seed {}",
        opts.bootstrap_reps, opts.level, opts.bootstrap_seed
    );
    let _ = writeln!(
        out,
        "- chance test: {} reps, seed {}",
        opts.chance_reps, opts.chance_seed
    );
    let _ = writeln!(out, "- familiarity gap: top/bottom k = {}", opts.gap_k);
    out.push('\n');

    let conditions_of = |model: &ModelReport| -> Vec<Condition> {
        model.conditions.iter().map(|c| c.condition).collect()
    };
    let all_conditions: Vec<Condition> = Condition::ALL
        .into_iter()
        .filter(|c| bundle.models.iter().any(|m| conditions_of(m).contains(c)))
        .collect();

    let header = |out: &mut String| {
        out.push_str("| Model |");
        for c in &all_conditions {
            let _ = write!(out, " {} |", c.label());
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &all_conditions {
            out.push_str("---|");
        }
        out.push('\n');
    };
    fn cell(model: &ModelReport, c: Condition) -> Option<&ConditionReport> {
        model.conditions.iter().find(|r| r.condition == c)
    }

    out.push_str("## Mean appropriateness (bootstrapped 95% CI)\n\n");
    header(&mut out);
    for model in &bundle.models {
        let _ = write!(out, "| {} |", model.label);
        for c in &all_conditions {
            match cell(model, *c) {
                Some(r) => match (&r.mean, &r.bootstrap) {
                    (Some(mean), Some(b)) => {
                        let _ = write!(
                            out,
                            " {} [{}, {}] |",
                            fmt2(*mean),
                            fmt2(b.ci_low),
                            fmt2(b.ci_high)
                        );
                    }
                    (Some(mean), None) => {
                        let _ = write!(out, " {} |", fmt2(*mean));
                    }
                    _ => out.push_str(" — |"),
                },
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');

    out.push_str("## Chance comparison (two-sided permutation p)\n\n");
    header(&mut out);
    for model in &bundle.models {
        let _ = write!(out, "| {} |", model.label);
        for c in &all_conditions {
            match cell(model, *c).and_then(|r| r.chance.as_ref()) {
                Some(chance) => {
                    let _ = write!(out, " {} |", chance_p_string(chance));
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');

    out.push_str("## Invalid responses\n\n");
    header(&mut out);
    for model in &bundle.models {
        let _ = write!(out, "| {} |", model.label);
        for c in &all_conditions {
            match cell(model, *c) {
                Some(r) => {
                    let _ = write!(out, " {} |", r.n_invalid);
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');

    for model in &bundle.models {
        if model.correlations.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            "## Correlations — {} (*p<.05, **p<.001)\n",
            model.label
        );
        let present: Vec<Condition> = conditions_of(model)
            .into_iter()
            .filter(|c| {
                model
                    .correlations
                    .iter()
                    .any(|cell| cell.a == *c || cell.b == *c)
            })
            .collect();
        out.push_str("| |");
        for (i, _) in present.iter().enumerate().skip(1) {
            let _ = write!(out, " {}. |", i + 1);
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in present.iter().skip(1) {
            out.push_str("---|");
        }
        out.push('\n');
        for (i, a) in present.iter().enumerate() {
            if i + 1 == present.len() {
                let _ = writeln!(out, "| {}. {} |", i + 1, a.label());
                continue;
            }
            let _ = write!(out, "| {}. {} |", i + 1, a.label());
            for b in present.iter().skip(1) {
                if present.iter().position(|x| x == b).unwrap() <= i {
                    out.push_str("  |");
                    continue;
                }
                match model
                    .correlations
                    .iter()
                    .find(|cell| cell.a == *a && cell.b == *b)
                {
                    Some(cell) => {
                        let _ = write!(out, " {}{} |", fmt2(cell.r), stars(cell.p));
                    }
                    None => out.push_str(" — |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }

    out.push_str("## Familiarity effect (proportional-odds slope, Wald 95% CI)\n\n");
    out.push_str(
        "Intervals approximate the credible intervals of a Bayesian fit; \
         an interval excluding 0 is read as significant.\n\n",
    );
    header(&mut out);
    for model in &bundle.models {
        let _ = write!(out, "| {} |", model.label);
        for c in &all_conditions {
            match cell(model, *c).and_then(|r| r.familiarity_effect.as_ref()) {
                Some(fit) => {
                    let mark = if fit.converged {
                        ""
                    } else {
                        " (not converged)"
                    };
                    let _ = write!(
                        out,
                        " {} [{}, {}]{} |",
                        fmt2(fit.beta),
                        fmt2(fit.ci_low),
                        fmt2(fit.ci_high),
                        mark
                    );
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');

    let _ = writeln!(
        out,
        "## Familiarity gap (mean over {0} most familiar − {0} least familiar)\n",
        bundle.options.gap_k
    );
    header(&mut out);
    for model in &bundle.models {
        let _ = write!(out, "| {} |", model.label);
        for c in &all_conditions {
            match cell(model, *c).and_then(|r| r.familiarity_gap) {
                Some(gap) => {
                    let _ = write!(out, " {} |", fmt2(gap));
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');

    out.push_str("## Appropriateness histograms\n\n");
    out.push_str("| Model | Condition | 1 | 2 | 3 | 4 | invalid |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for model in &bundle.models {
        for r in &model.conditions {
            let h = r.histogram;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                model.label,
                r.condition.label(),
                h[0],
                h[1],
                h[2],
                h[3],
                r.n_invalid
            );
        }
    }
    out.push('\n');

    if !bundle.notes.is_empty() {
        out.push_str("## Notes\n\n");
        for note in &bundle.notes {
            let _ = writeln!(out, "- {note}");
        }
        out.push('\n');
    }

    out
}

fn csv_tables(bundle: &ReportBundle) -> Vec<(&'static str, String)> {
    let mut mean = String::from(
        "model,condition,split,run_id,n_valid,n_invalid,n_failures,mean,ci_low,ci_high,chance_p,chance_hits,chance_reps\n",
    );
    let mut invalid = String::from("model,condition,n_invalid\n");
    let mut correlations = String::from("model,condition_a,condition_b,r,p,n\n");
    let mut familiarity =
        String::from("model,condition,beta,se,ci_low,ci_high,converged,iterations,n\n");
    let mut gaps = String::from("model,condition,k,gap\n");
    let mut histograms = String::from("model,condition,score_1,score_2,score_3,score_4,invalid\n");

    for model in &bundle.models {
        for r in &model.conditions {
            let _ = writeln!(
                mean,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                model.label,
                r.condition,
                r.split,
                r.run_id,
                r.n_valid,
                r.n_invalid,
                r.n_failures,
                r.mean.map(fmt2).unwrap_or_default(),
                r.bootstrap
                    .as_ref()
                    .map(|b| fmt2(b.ci_low))
                    .unwrap_or_default(),
                r.bootstrap
                    .as_ref()
                    .map(|b| fmt2(b.ci_high))
                    .unwrap_or_default(),
                r.chance
                    .as_ref()
                    .map(|c| fmt_p(c.p_value()))
                    .unwrap_or_default(),
                r.chance
                    .as_ref()
                    .map(|c| c.hits.to_string())
                    .unwrap_or_default(),
                r.chance
                    .as_ref()
                    .map(|c| c.reps.to_string())
                    .unwrap_or_default(),
            );
            let _ = writeln!(invalid, "{},{},{}", model.label, r.condition, r.n_invalid);
            if let Some(fit) = &r.familiarity_effect {
                let _ = writeln!(
                    familiarity,
                    "{},{},{},{},{},{},{},{},{}",
                    model.label,
                    r.condition,
                    fmt2(fit.beta),
                    fmt2(fit.se),
                    fmt2(fit.ci_low),
                    fmt2(fit.ci_high),
                    fit.converged,
                    fit.iterations,
                    fit.n,
                );
            }
            if let Some(gap) = r.familiarity_gap {
                let _ = writeln!(
                    gaps,
                    "{},{},{},{}",
                    model.label,
                    r.condition,
                    bundle.options.gap_k,
                    fmt2(gap)
                );
            }
            let h = r.histogram;
            let _ = writeln!(
                histograms,
                "{},{},{},{},{},{},{}",
                model.label, r.condition, h[0], h[1], h[2], h[3], r.n_invalid
            );
        }
        for cell in &model.correlations {
            let _ = writeln!(
                correlations,
                "{},{},{},{},{},{}",
                model.label,
                cell.a,
                cell.b,
                fmt2(cell.r),
                fmt_p(cell.p),
                cell.n
            );
        }
    }

    vec![
        ("mean_appropriateness.csv", mean),
        ("invalid_counts.csv", invalid),
        ("correlations.csv", correlations),
        ("familiarity_effects.csv", familiarity),
        ("familiarity_gaps.csv", gaps),
        ("histograms.csv", histograms),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_convention_matches_caption() {
        assert_eq!(stars(0.0005), "**");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.06), "");
    }

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.00005), "<0.0001");
        assert_eq!(fmt_p(0.0234), "0.0234");
        assert_eq!(fmt2(3.705), "3.71");
    }
}
