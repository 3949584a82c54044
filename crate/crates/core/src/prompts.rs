//! Deterministic rendering of the six prompt conditions.
//!
//! A prompt is the instruction sentence, ten rendered training examples in a
//! seed-shuffled order, then the target metaphor and its lettered options,
//! ending right where the model is expected to continue. Rendering is a pure
//! function of (condition, example bank, seeds, target, template version):
//! the same inputs always produce the same bytes, which is what makes cached
//! runs and snapshot tests possible.
//!
//! Layout, fixed under [`TEMPLATE_VERSION`]: one blank line between
//! examples, options one per line as "x) text", the metaphor sentence in
//! ASCII double quotes. Rationale-bearing answer paragraphs come verbatim
//! from the bank and end with "…so the speaker is saying x) …"; the
//! remaining conditions end with a generated "The answer is x) …" sentence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    assign_letters, Corpus, Letter, LetterAssignment, MetaphorItem, SplitCorpus, LETTERS,
};
use crate::parser::{extract_all, Anchor};
use crate::util::{derive_seed, shuffle_in_place, SplitMix64};

/// Version tag for the prompt byte layout; embedded in every rendered
/// prompt's provenance and in reports.
pub const TEMPLATE_VERSION: &str = "v1";

/// The fixed first line of every prompt.
pub const INSTRUCTION: &str = "Choose the most appropriate paraphrase of the first sentence.";

pub const EXAMPLES_PER_PROMPT: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("rationale bank references unknown item id {0}")]
    DanglingItem(String),
    #[error("example {item_id}: missing {condition} rationale body")]
    MissingBody {
        item_id: String,
        condition: Condition,
    },
    #[error("example {item_id}, condition {condition}: no answer clause in rationale body")]
    NoAnswerClause {
        item_id: String,
        condition: Condition,
    },
    #[error("example {item_id}, condition {condition}: {n} answer clauses in rationale body, expected exactly one")]
    MultipleAnswerClauses {
        item_id: String,
        condition: Condition,
        n: usize,
    },
    #[error("example {item_id}, condition {condition}: rationale names {found} but the letter map puts the best paraphrase at {expected}")]
    LetterMismatch {
        item_id: String,
        condition: Condition,
        expected: Letter,
        found: Letter,
    },
    #[error("example {item_id}, condition {condition}: rationale ends with the wrong anchor phrase for this condition")]
    WrongAnchor {
        item_id: String,
        condition: Condition,
    },
    #[error("prompt requires exactly {expected} examples, got {got}")]
    ExampleCount { expected: usize, got: usize },
    #[error("example {0} is not in the training split (dev/test leakage)")]
    LeakedExample(String),
    #[error("no rationale bank entry for example item {0}")]
    MissingExample(String),
    #[error("duplicate bank record for item {item_id}, condition {condition}")]
    DuplicateRecord {
        item_id: String,
        condition: Condition,
    },
}

/// The six prompt conditions: four baselines plus the two
/// psychologically-informed rationale types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    OptionsOnly,
    NoRationale,
    NonExplanation,
    SubjectObject,
    Qud,
    Similarity,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::OptionsOnly,
        Condition::NoRationale,
        Condition::NonExplanation,
        Condition::SubjectObject,
        Condition::Qud,
        Condition::Similarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::OptionsOnly => "options_only",
            Condition::NoRationale => "no_rationale",
            Condition::NonExplanation => "non_explanation",
            Condition::SubjectObject => "subject_object",
            Condition::Qud => "qud",
            Condition::Similarity => "similarity",
        }
    }

    /// Human-facing label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Condition::OptionsOnly => "Options Only",
            Condition::NoRationale => "No Rationale",
            Condition::NonExplanation => "Non-Explanation",
            Condition::SubjectObject => "Subject-Object",
            Condition::Qud => "QUD",
            Condition::Similarity => "Similarity",
        }
    }

    /// Conditions whose answer paragraph is a hand-written body from the bank.
    pub fn requires_body(self) -> bool {
        !matches!(self, Condition::OptionsOnly | Condition::NoRationale)
    }

    /// Anchor phrase family the condition's answer clause must use.
    pub fn anchor(self) -> Anchor {
        match self {
            Condition::OptionsOnly | Condition::NoRationale | Condition::NonExplanation => {
                Anchor::AnswerIs
            }
            Condition::SubjectObject | Condition::Qud | Condition::Similarity => {
                Anchor::SpeakerIsSaying
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

/// Letter policy an example's rationales were written against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExampleLetterPolicy {
    #[default]
    AsGiven,
    Shuffled {
        seed: u64,
    },
}

impl ExampleLetterPolicy {
    fn to_policy(self) -> crate::corpus::LetterPolicy {
        match self {
            ExampleLetterPolicy::AsGiven => crate::corpus::LetterPolicy::AsGiven,
            ExampleLetterPolicy::Shuffled { seed } => crate::corpus::LetterPolicy::Shuffled(seed),
        }
    }
}

/// Hand-written rationale bodies for one training-set metaphor, one body per
/// rationale-bearing condition. Bodies include the final answer clause.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub item_id: String,
    #[serde(default)]
    pub letter_policy: ExampleLetterPolicy,
    pub rationales: BTreeMap<Condition, String>,
}

impl ExampleRecord {
    pub fn body(&self, condition: Condition) -> Option<&str> {
        self.rationales.get(&condition).map(String::as_str)
    }
}

/// One line of the bank file.
#[derive(Debug, Serialize, Deserialize)]
struct BankLine {
    item_id: String,
    condition: Condition,
    body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    letter_policy: Option<ExampleLetterPolicy>,
}

/// The example bank: every hand-written rationale, grouped by item.
#[derive(Debug, Clone, Default)]
pub struct RationaleBank {
    records: BTreeMap<String, ExampleRecord>,
}

impl RationaleBank {
    /// Load a line-delimited bank file and validate every body against the
    /// corpus: each must contain exactly one answer clause, in the anchor
    /// family of its condition, naming the letter of the appropriateness-4
    /// paraphrase under the record's letter policy.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_named(&text, &path.display().to_string(), corpus)
    }

    /// Parse and validate a bank from memory.
    pub fn from_jsonl_str(text: &str, corpus: &Corpus) -> Result<Self, PromptError> {
        Self::from_jsonl_named(text, "<jsonl>", corpus)
    }

    /// Parse a bank file without cross-validating against a corpus. Used by
    /// `validate` to aggregate every violation instead of stopping at the
    /// first.
    pub fn load_unchecked(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_jsonl_named(&text, &path.display().to_string())
    }

    fn from_jsonl_named(text: &str, origin: &str, corpus: &Corpus) -> Result<Self, PromptError> {
        let bank = Self::parse_jsonl_named(text, origin)?;
        bank.validate(corpus)?;
        Ok(bank)
    }

    fn parse_jsonl_named(text: &str, origin: &str) -> Result<Self, PromptError> {
        let mut records: BTreeMap<String, ExampleRecord> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: BankLine = serde_json::from_str(line).map_err(|e| PromptError::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            let record = records
                .entry(parsed.item_id.clone())
                .or_insert_with(|| ExampleRecord {
                    item_id: parsed.item_id.clone(),
                    letter_policy: parsed.letter_policy.unwrap_or_default(),
                    rationales: BTreeMap::new(),
                });
            if record
                .rationales
                .insert(parsed.condition, parsed.body)
                .is_some()
            {
                return Err(PromptError::DuplicateRecord {
                    item_id: parsed.item_id,
                    condition: parsed.condition,
                });
            }
        }
        Ok(RationaleBank { records })
    }

    pub fn from_records(records: Vec<ExampleRecord>, corpus: &Corpus) -> Result<Self, PromptError> {
        let bank = RationaleBank {
            records: records
                .into_iter()
                .map(|r| (r.item_id.clone(), r))
                .collect(),
        };
        bank.validate(corpus)?;
        Ok(bank)
    }

    pub fn get(&self, item_id: &str) -> Option<&ExampleRecord> {
        self.records.get(item_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    fn validate(&self, corpus: &Corpus) -> Result<(), PromptError> {
        match self.diagnostics(corpus).into_iter().next() {
            Some(first) => Err(first),
            None => Ok(()),
        }
    }

    /// Every validation violation in the bank, not just the first: dangling
    /// item ids, missing bodies, and bodies whose answer clause is absent,
    /// ambiguous, in the wrong anchor family, or naming the wrong letter.
    pub fn diagnostics(&self, corpus: &Corpus) -> Vec<PromptError> {
        let mut problems = Vec::new();
        for record in self.records.values() {
            let Some(item) = corpus.get(&record.item_id) else {
                problems.push(PromptError::DanglingItem(record.item_id.clone()));
                continue;
            };
            let letters = assign_letters(item, record.letter_policy.to_policy());
            for condition in Condition::ALL.into_iter().filter(|c| c.requires_body()) {
                match record.body(condition) {
                    None => problems.push(PromptError::MissingBody {
                        item_id: record.item_id.clone(),
                        condition,
                    }),
                    Some(body) => {
                        if let Err(e) = check_answer_clause(body, condition, item, &letters) {
                            problems.push(e);
                        }
                    }
                }
            }
        }
        problems
    }
}

/// Validate that a rationale body carries exactly one answer clause, with the
/// right anchor family, naming the best paraphrase's letter.
fn check_answer_clause(
    body: &str,
    condition: Condition,
    item: &MetaphorItem,
    letters: &LetterAssignment,
) -> Result<(), PromptError> {
    let anchors = extract_all(body);
    match anchors.len() {
        0 => {
            return Err(PromptError::NoAnswerClause {
                item_id: item.id.clone(),
                condition,
            });
        }
        1 => {}
        n => {
            return Err(PromptError::MultipleAnswerClauses {
                item_id: item.id.clone(),
                condition,
                n,
            });
        }
    }
    let parsed = &anchors[0];
    if parsed.matched_anchor != condition.anchor() {
        return Err(PromptError::WrongAnchor {
            item_id: item.id.clone(),
            condition,
        });
    }
    let expected = letters.letter_for_best(item);
    let found = parsed.letter.expect("anchored match carries a letter");
    if found != expected {
        return Err(PromptError::LetterMismatch {
            item_id: item.id.clone(),
            condition,
            expected,
            found,
        });
    }
    Ok(())
}

/// Byte-exact prompt for one (condition, target) pair, with the exact letter
/// mapping the answers must be scored against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub condition: Condition,
    pub target_item_id: String,
    pub text: String,
    pub letter_map: LetterAssignment,
    pub example_ids: Vec<String>,
    pub template_version: String,
}

/// Render one example paragraph: quoted metaphor (except options_only),
/// lettered options, then the answer paragraph for the condition.
pub fn render_example(
    item: &MetaphorItem,
    example: &ExampleRecord,
    condition: Condition,
    letters: &LetterAssignment,
) -> Result<String, PromptError> {
    let mut out = String::new();
    if condition != Condition::OptionsOnly {
        out.push('"');
        out.push_str(&item.sentence);
        out.push_str("\"\n");
    }
    push_options(&mut out, item, letters);
    if condition.requires_body() {
        let body = example
            .body(condition)
            .ok_or_else(|| PromptError::MissingBody {
                item_id: item.id.clone(),
                condition,
            })?;
        check_answer_clause(body, condition, item, letters)?;
        out.push_str(body);
    } else {
        out.push_str(&answer_sentence(item, letters));
    }
    Ok(out)
}

fn push_options(out: &mut String, item: &MetaphorItem, letters: &LetterAssignment) {
    for letter in LETTERS {
        let idx = letters.paraphrase_index(letter);
        out.push_str(&format!("{letter}) {}\n", item.paraphrases[idx].text));
    }
}

/// Generated answer sentence for the conditions without a hand-written body.
fn answer_sentence(item: &MetaphorItem, letters: &LetterAssignment) -> String {
    let best = item.best_index();
    let letter = letters.letter_for_index(best);
    format!("The answer is {letter}) {}", item.paraphrases[best].text)
}

/// Renders prompts for one run: fixed example set, fixed order, fixed
/// template. Construction validates the example set; rendering then cannot
/// fail for no_rationale/options_only and fails only on bank inconsistencies
/// for the rest.
#[derive(Debug, Clone)]
pub struct PromptRenderer<'a> {
    corpus: &'a Corpus,
    bank: &'a RationaleBank,
    /// Example ids in the order they appear in every prompt of this run.
    ordered_examples: Vec<String>,
}

impl<'a> PromptRenderer<'a> {
    /// `example_ids` must be exactly ten training-split items present in the
    /// bank. Their order in prompts is a seeded shuffle, fixed once per run.
    pub fn new(
        corpus: &'a Corpus,
        bank: &'a RationaleBank,
        example_ids: &[String],
        split: &SplitCorpus,
        order_seed: u64,
    ) -> Result<Self, PromptError> {
        if example_ids.len() != EXAMPLES_PER_PROMPT {
            return Err(PromptError::ExampleCount {
                expected: EXAMPLES_PER_PROMPT,
                got: example_ids.len(),
            });
        }
        let mut unique: Vec<&String> = example_ids.iter().collect();
        unique.sort();
        unique.dedup();
        if unique.len() != example_ids.len() {
            return Err(PromptError::ExampleCount {
                expected: EXAMPLES_PER_PROMPT,
                got: unique.len(),
            });
        }
        for id in example_ids {
            if corpus.get(id).is_none() {
                return Err(PromptError::DanglingItem(id.clone()));
            }
            if !split.train.iter().any(|t| t == id) {
                return Err(PromptError::LeakedExample(id.clone()));
            }
            if bank.get(id).is_none() {
                return Err(PromptError::MissingExample(id.clone()));
            }
        }
        let mut ordered_examples = example_ids.to_vec();
        let mut rng = SplitMix64(derive_seed(order_seed, "example_order"));
        shuffle_in_place(&mut ordered_examples, &mut rng);
        Ok(PromptRenderer {
            corpus,
            bank,
            ordered_examples,
        })
    }

    pub fn example_order(&self) -> &[String] {
        &self.ordered_examples
    }

    pub fn render(
        &self,
        condition: Condition,
        target: &MetaphorItem,
        target_letters: &LetterAssignment,
    ) -> Result<RenderedPrompt, PromptError> {
        let mut text = String::from(INSTRUCTION);
        text.push_str("\n\n");
        for id in &self.ordered_examples {
            let item = self.corpus.get(id).expect("validated at construction");
            let example = self.bank.get(id).expect("validated at construction");
            let letters = assign_letters(item, example.letter_policy.to_policy());
            text.push_str(&render_example(item, example, condition, &letters)?);
            text.push_str("\n\n");
        }
        if condition != Condition::OptionsOnly {
            text.push('"');
            text.push_str(&target.sentence);
            text.push_str("\"\n");
        }
        let mut options = String::new();
        push_options(&mut options, target, target_letters);
        text.push_str(options.trim_end_matches('\n'));
        debug_assert!(
            condition != Condition::OptionsOnly || !text.contains(&target.sentence),
            "options_only prompt must not contain the target sentence"
        );
        Ok(RenderedPrompt {
            condition,
            target_item_id: target.id.clone(),
            text,
            letter_map: target_letters.clone(),
            example_ids: self.ordered_examples.clone(),
            template_version: TEMPLATE_VERSION.to_string(),
        })
    }
}
