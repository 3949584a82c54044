//! Command-line front end for the metaphor paraphrase evaluation pipeline.
//!
//! Exit codes: 0 success, 2 validation failure, 3 partial run,
//! 4 analysis inconsistency, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use metaphor_eval::config::Config;
use metaphor_eval::pipeline::{self, PipelineError};
use metaphor_eval::prompts::Condition;
use metaphor_eval::report::{emit, load_bundle, ReportError, ReportFormat};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "metaphor-eval",
    version,
    about = "Metaphor paraphrase evaluation pipeline"
)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "config.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load corpus and bank, run all invariant checks, render one sample
    /// prompt per condition.
    Validate,
    /// Print the train/dev/test membership for the configured seed.
    Split {
        /// Emit machine-readable JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Render prompts, call the backend, parse and score, write manifests.
    Run {
        /// Only run these conditions (repeatable); default is all configured.
        #[arg(long = "condition", value_name = "NAME")]
        conditions: Vec<String>,
    },
    /// Compute statistics from stored manifests and write the full report.
    Analyze {
        /// Directory of run manifests; default is <output_dir>/runs.
        #[arg(long)]
        manifests: Option<PathBuf>,
    },
    /// Re-emit report files from an existing report.json.
    Report {
        /// Bundle to render; default is <output_dir>/report.json.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Formats to write (repeatable); default markdown.
        #[arg(long, value_enum)]
        format: Vec<FormatArg>,
        /// Destination directory; default is the configured output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if let Some(pipeline_error) = e.downcast_ref::<PipelineError>() {
        return match pipeline_error {
            PipelineError::Report(
                ReportError::DigestMismatch { .. }
                | ReportError::DuplicateRun { .. }
                | ReportError::TemplateMismatch { .. },
            ) => EXIT_INCONSISTENT,
            PipelineError::Config(_)
            | PipelineError::Corpus(_)
            | PipelineError::Prompt(_)
            | PipelineError::Invalid(_)
            | PipelineError::Diagnostics(_) => EXIT_VALIDATION,
            _ => 1,
        };
    }
    if e.downcast_ref::<metaphor_eval::config::ConfigError>()
        .is_some()
    {
        return EXIT_VALIDATION;
    }
    1
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    let config = Config::load(&cli.config)?;
    match &cli.command {
        Command::Validate => {
            let summary = pipeline::validate(&config)?;
            print!("{summary}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Split { json } => {
            let inputs = pipeline::load_inputs(&config)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&inputs.split)?);
            } else {
                for (name, ids) in [
                    ("train", &inputs.split.train),
                    ("dev", &inputs.split.dev),
                    ("test", &inputs.split.test),
                ] {
                    println!("{name} ({}):", ids.len());
                    for id in ids {
                        println!("  {id}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { conditions } => {
            let filter = parse_conditions(conditions)?;
            let outcome = pipeline::run(&config, filter.as_deref())?;
            for run in &outcome.runs {
                println!(
                    "{}: {} items, {} invalid, {} failures, {} cache hits (run {})",
                    run.condition,
                    run.results.len(),
                    run.n_invalid(),
                    run.failures.len(),
                    run.n_cache_hits(),
                    run.run_id
                );
            }
            if outcome.is_partial() {
                eprintln!("partial run; failed items:");
                for (condition, item_id, error) in outcome.failed_items() {
                    eprintln!("  {condition}/{item_id}: {error}");
                }
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { manifests } => {
            let outcome = pipeline::analyze(&config, manifests.as_deref())?;
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { from, format, out } => {
            let source = from
                .clone()
                .unwrap_or_else(|| config.run.output_dir.join("report.json"));
            let bundle = load_bundle(&source)?;
            let out_dir = out.clone().unwrap_or_else(|| config.run.output_dir.clone());
            let formats: Vec<ReportFormat> = if format.is_empty() {
                vec![ReportFormat::Markdown]
            } else {
                format.iter().map(|f| ReportFormat::from(*f)).collect()
            };
            for f in formats {
                for file in emit(&bundle, f, &out_dir)? {
                    println!("wrote {}", file.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_conditions(names: &[String]) -> anyhow::Result<Option<Vec<Condition>>> {
    if names.is_empty() {
        return Ok(None);
    }
    let mut conditions = Vec::new();
    for name in names {
        conditions.push(Condition::from_str(name).map_err(anyhow::Error::msg)?);
    }
    Ok(Some(conditions))
}
