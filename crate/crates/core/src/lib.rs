//! Evaluation harness for metaphor paraphrase selection.
//!
//! The pipeline turns a metaphor corpus into few-shot prompts under six
//! prompt conditions, runs them against a completion backend (HTTP or mock),
//! extracts multiple-choice answers, and computes the full statistical
//! report: mean appropriateness with bootstrap confidence intervals, chance
//! permutation tests, Pearson correlation matrices, proportional-odds
//! regression on familiarity, and familiarity-gap contrasts.
//!
//! Everything downstream of the corpus is a pure function of data and seeds:
//! rerunning a pipeline with the same config and a warm cache reproduces the
//! same report byte for byte.

pub mod client;
pub mod config;
pub mod corpus;
pub mod parser;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod stats;

mod util;

pub use corpus::{Corpus, LetterAssignment, LetterPolicy, MetaphorItem, Paraphrase, SplitCorpus};
pub use parser::{extract_answer, score_answer, ParsedAnswer, ScoredAnswer};
pub use prompts::{Condition, ExampleRecord, RationaleBank, RenderedPrompt};
