//! Metaphor corpus: loading, validation, filtering, splitting, and
//! letter-labelling of paraphrase options.
//!
//! A corpus file is line-delimited, one metaphor per record, with the four
//! scored paraphrases nested. An optional exclusion list (also line-delimited)
//! marks items that are editorially removed from analysis; exclusions are
//! applied at load and carried as a flag so provenance is never lost.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::{derive_seed, sha256_hex, shuffle_in_place, SplitMix64};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
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
    #[error("item {id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("item {id}: paraphrase count is {n}, expected 4")]
    ParaphraseCount { id: String, n: usize },
    #[error("item {id}: appropriateness not a permutation of 1..4")]
    AppropriatenessSet { id: String },
    #[error("exclusion list references unknown item id {0}")]
    UnknownExclusion(String),
    #[error("item {id}: missing {norm} norm")]
    MissingNorm { id: String, norm: &'static str },
    #[error("split sizes {requested} do not sum to corpus size {actual}")]
    SizesMismatch { requested: usize, actual: usize },
    #[error("unknown item id {0}")]
    UnknownItem(String),
}

/// Whether a metaphor came from the literary or non-literary half of the
/// source corpus. The comprehensibility filter applies to literary items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Literary,
    Nonliterary,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Literary => write!(f, "literary"),
            Source::Nonliterary => write!(f, "nonliterary"),
        }
    }
}

/// One candidate paraphrase with its appropriateness rank (1 worst .. 4 best).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paraphrase {
    pub text: String,
    pub appropriateness: u8,
}

/// One metaphor of the form "\[subject] is \[object]" with four scored
/// paraphrases and optional psycholinguistic norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaphorItem {
    pub id: String,
    pub sentence: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub object: Option<String>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comprehensibility: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub familiarity: Option<f64>,
    pub paraphrases: Vec<Paraphrase>,
    /// Exclusion reason, set from the exclusion list at load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

impl MetaphorItem {
    pub fn is_excluded(&self) -> bool {
        self.excluded.is_some()
    }

    /// Index (0..4, stored order) of the appropriateness-4 paraphrase.
    pub fn best_index(&self) -> usize {
        self.paraphrases
            .iter()
            .position(|p| p.appropriateness == 4)
            .expect("validated item has an appropriateness-4 paraphrase")
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.sentence.trim().is_empty() {
            return Err(CorpusError::Invalid {
                id: self.id.clone(),
                msg: "sentence is empty".into(),
            });
        }
        if self.paraphrases.len() != 4 {
            return Err(CorpusError::ParaphraseCount {
                id: self.id.clone(),
                n: self.paraphrases.len(),
            });
        }
        let mut seen = [false; 4];
        for p in &self.paraphrases {
            if !(1..=4).contains(&p.appropriateness) || seen[p.appropriateness as usize - 1] {
                return Err(CorpusError::AppropriatenessSet {
                    id: self.id.clone(),
                });
            }
            seen[p.appropriateness as usize - 1] = true;
            if p.text.trim().is_empty() {
                return Err(CorpusError::Invalid {
                    id: self.id.clone(),
                    msg: "empty paraphrase text".into(),
                });
            }
        }
        for (field, value) in [("subject", &self.subject), ("object", &self.object)] {
            let v = value.as_deref().unwrap_or_default();
            if v.is_empty() {
                return Err(CorpusError::Invalid {
                    id: self.id.clone(),
                    msg: format!("missing {field}"),
                });
            }
            if !self.sentence.contains(v) {
                return Err(CorpusError::Invalid {
                    id: self.id.clone(),
                    msg: format!("{field} {v:?} is not a substring of the sentence"),
                });
            }
        }
        Ok(())
    }

    /// Fill missing subject/object by splitting on the copula.
    fn fill_subject_object(&mut self) {
        if self.subject.is_some() && self.object.is_some() {
            return;
        }
        if let Some((subj, obj)) = split_copula(&self.sentence) {
            self.subject.get_or_insert(subj);
            self.object.get_or_insert(obj);
        }
    }
}

/// Split "<subject> is <object>." on the first copula. Returns None when no
/// copula is present; validation will then reject the record.
fn split_copula(sentence: &str) -> Option<(String, String)> {
    let (idx, cop_len) = [" is ", " are "]
        .iter()
        .filter_map(|cop| sentence.find(cop).map(|i| (i, cop.len())))
        .min()?;
    let subject = sentence[..idx].to_string();
    let object = sentence[idx + cop_len..]
        .trim_end_matches(['.', '!', '?'])
        .to_string();
    if subject.is_empty() || object.is_empty() {
        return None;
    }
    Some((subject, object))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// A validated metaphor corpus. Immutable after load; all downstream
/// operations take the corpus by shared reference.
#[derive(Debug, Clone)]
pub struct Corpus {
    items: Vec<MetaphorItem>,
}

impl Corpus {
    pub fn from_items(items: Vec<MetaphorItem>) -> Result<Self, CorpusError> {
        let mut ids = BTreeSet::new();
        for item in &items {
            item.validate()?;
            if !ids.insert(item.id.clone()) {
                return Err(CorpusError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Corpus { items })
    }

    pub fn load(path: &Path, format: CorpusFormat) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let origin = path.display().to_string();
        match format {
            CorpusFormat::Jsonl => Self::from_jsonl_named(&text, &origin),
            CorpusFormat::Csv => Self::from_csv_named(&text, &origin),
        }
    }

    /// Parse and validate a line-delimited corpus from memory.
    pub fn from_jsonl_str(text: &str) -> Result<Self, CorpusError> {
        Self::from_jsonl_named(text, "<jsonl>")
    }

    /// Parse and validate a columnar corpus from memory.
    pub fn from_csv_str(text: &str) -> Result<Self, CorpusError> {
        Self::from_csv_named(text, "<csv>")
    }

    fn from_jsonl_named(text: &str, origin: &str) -> Result<Self, CorpusError> {
        let mut items = parse_jsonl(text, origin)?;
        for item in &mut items {
            item.fill_subject_object();
        }
        Self::from_items(items)
    }

    fn from_csv_named(text: &str, origin: &str) -> Result<Self, CorpusError> {
        let mut items = parse_csv(text, origin)?;
        for item in &mut items {
            item.fill_subject_object();
        }
        Self::from_items(items)
    }

    /// Load a corpus and flag every item named in the exclusion list.
    pub fn load_with_exclusions(
        path: &Path,
        format: CorpusFormat,
        exclusions: &Path,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Self::load(path, format)?;
        let list = load_exclusions(exclusions)?;
        corpus.apply_exclusions(&list)?;
        Ok(corpus)
    }

    pub fn apply_exclusions(&mut self, list: &[Exclusion]) -> Result<(), CorpusError> {
        for excl in list {
            match self.items.iter_mut().find(|it| it.id == excl.id) {
                Some(item) => item.excluded = Some(excl.reason.clone()),
                None => return Err(CorpusError::UnknownExclusion(excl.id.clone())),
            }
        }
        Ok(())
    }

    /// Join norms from a separate columnar file keyed by id. Existing values
    /// on an item win over joined ones.
    pub fn join_norms(&mut self, norms: &BTreeMap<String, Norms>) {
        for item in &mut self.items {
            if let Some(n) = norms.get(&item.id) {
                if item.comprehensibility.is_none() {
                    item.comprehensibility = n.comprehensibility;
                }
                if item.familiarity.is_none() {
                    item.familiarity = n.familiarity;
                }
            }
        }
    }

    pub fn items(&self) -> &[MetaphorItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items that survive exclusion; the population all splits draw from.
    pub fn included(&self) -> impl Iterator<Item = &MetaphorItem> {
        self.items.iter().filter(|it| !it.is_excluded())
    }

    pub fn included_len(&self) -> usize {
        self.included().count()
    }

    pub fn get(&self, id: &str) -> Option<&MetaphorItem> {
        self.items.iter().find(|it| it.id == id)
    }

    /// Retain literary items whose comprehensibility meets `threshold`;
    /// items outside `apply_to` pass through unchanged.
    pub fn filter_comprehensible(
        &self,
        threshold: f64,
        apply_to: SourceFilter,
    ) -> Result<Corpus, CorpusError> {
        let mut kept = Vec::new();
        for item in &self.items {
            if !apply_to.matches(item.source) {
                kept.push(item.clone());
                continue;
            }
            let rating = item.comprehensibility.ok_or(CorpusError::MissingNorm {
                id: item.id.clone(),
                norm: "comprehensibility",
            })?;
            if rating >= threshold {
                kept.push(item.clone());
            }
        }
        Ok(Corpus { items: kept })
    }

    /// Seeded pseudo-random partition of the included items.
    ///
    /// Items are ordered by the digest of (seed, id) and cut into the three
    /// splits, so membership depends only on the seed and the item ids — not
    /// on file order or any RNG crate's stream layout.
    pub fn split(&self, seed: u64, sizes: SplitSizes) -> Result<SplitCorpus, CorpusError> {
        let included: Vec<&MetaphorItem> = self.included().collect();
        if sizes.total() != included.len() {
            return Err(CorpusError::SizesMismatch {
                requested: sizes.total(),
                actual: included.len(),
            });
        }
        let mut keyed: Vec<(String, &MetaphorItem)> = included
            .into_iter()
            .map(|it| {
                let mut material = Vec::with_capacity(8 + it.id.len());
                material.extend_from_slice(&seed.to_le_bytes());
                material.extend_from_slice(it.id.as_bytes());
                (sha256_hex(&material), it)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let ordered: Vec<String> = keyed.into_iter().map(|(_, it)| it.id.clone()).collect();
        let (train, rest) = ordered.split_at(sizes.train);
        let (dev, test) = rest.split_at(sizes.dev);
        Ok(SplitCorpus {
            train: train.to_vec(),
            dev: dev.to_vec(),
            test: test.to_vec(),
            seed,
            sizes,
        })
    }

    /// Content digest over the validated items, sorted by id. Captures the
    /// data the analysis actually saw, independent of file formatting.
    pub fn digest(&self) -> String {
        let mut sorted: Vec<&MetaphorItem> = self.items.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let json = serde_json::to_string(&sorted).expect("corpus items serialize");
        sha256_hex(json.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFilter {
    Literary,
    Nonliterary,
    All,
}

impl SourceFilter {
    fn matches(self, source: Source) -> bool {
        match self {
            SourceFilter::Literary => source == Source::Literary,
            SourceFilter::Nonliterary => source == Source::Nonliterary,
            SourceFilter::All => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, dev: usize, test: usize) -> Self {
        SplitSizes { train, dev, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

/// Train/dev/test membership by item id, plus the seed that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCorpus {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub sizes: SplitSizes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitName::Train => write!(f, "train"),
            SplitName::Dev => write!(f, "dev"),
            SplitName::Test => write!(f, "test"),
        }
    }
}

impl SplitCorpus {
    pub fn ids(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    pub fn contains(&self, name: SplitName, id: &str) -> bool {
        self.ids(name).iter().any(|i| i == id)
    }
}

/// One editorial exclusion: item id plus the reason it was removed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

pub fn load_exclusions(path: &Path) -> Result<Vec<Exclusion>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_exclusions(&text, &path.display().to_string())
}

/// Parse an exclusion list (one JSON record per line) from memory.
pub fn parse_exclusions(text: &str, origin: &str) -> Result<Vec<Exclusion>, CorpusError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let excl: Exclusion = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        out.push(excl);
    }
    Ok(out)
}

/// Norm values from a separate columnar file, joined by item id.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct Norms {
    #[serde(default)]
    pub comprehensibility: Option<f64>,
    #[serde(default)]
    pub familiarity: Option<f64>,
}

pub fn load_norms_csv(path: &Path) -> Result<BTreeMap<String, Norms>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_norms_csv(&text, &path.display().to_string())
}

/// Parse a columnar norms file (id, comprehensibility, familiarity) from
/// memory.
pub fn parse_norms_csv(text: &str, origin: &str) -> Result<BTreeMap<String, Norms>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        #[serde(default)]
        comprehensibility: Option<f64>,
        #[serde(default)]
        familiarity: Option<f64>,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (lineno, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CorpusError::Parse {
            path: origin.to_string(),
            line: lineno + 2,
            msg: e.to_string(),
        })?;
        out.insert(
            row.id,
            Norms {
                comprehensibility: row.comprehensibility,
                familiarity: row.familiarity,
            },
        );
    }
    Ok(out)
}

fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<MetaphorItem>, CorpusError> {
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: MetaphorItem = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn parse_csv(text: &str, origin: &str) -> Result<Vec<MetaphorItem>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        sentence: String,
        #[serde(default)]
        subject: Option<String>,
        #[serde(default)]
        object: Option<String>,
        source: Source,
        #[serde(default)]
        comprehensibility: Option<f64>,
        #[serde(default)]
        familiarity: Option<f64>,
        paraphrase_1: String,
        appropriateness_1: u8,
        paraphrase_2: String,
        appropriateness_2: u8,
        paraphrase_3: String,
        appropriateness_3: u8,
        paraphrase_4: String,
        appropriateness_4: u8,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut items = Vec::new();
    for (lineno, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CorpusError::Parse {
            path: origin.to_string(),
            line: lineno + 2,
            msg: e.to_string(),
        })?;
        // Filter out empty optional cells that the csv crate maps to Some("").
        let clean = |s: Option<String>| s.filter(|v| !v.is_empty());
        items.push(MetaphorItem {
            id: row.id,
            sentence: row.sentence,
            subject: clean(row.subject),
            object: clean(row.object),
            source: row.source,
            comprehensibility: row.comprehensibility,
            familiarity: row.familiarity,
            paraphrases: vec![
                Paraphrase {
                    text: row.paraphrase_1,
                    appropriateness: row.appropriateness_1,
                },
                Paraphrase {
                    text: row.paraphrase_2,
                    appropriateness: row.appropriateness_2,
                },
                Paraphrase {
                    text: row.paraphrase_3,
                    appropriateness: row.appropriateness_3,
                },
                Paraphrase {
                    text: row.paraphrase_4,
                    appropriateness: row.appropriateness_4,
                },
            ],
            excluded: None,
        });
    }
    Ok(items)
}

/// Option letter for a paraphrase slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Letter {
    A,
    B,
    C,
    D,
}

pub const LETTERS: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

impl Letter {
    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'a',
            Letter::B => 'b',
            Letter::C => 'c',
            Letter::D => 'd',
        }
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_lowercase() {
            'a' => Some(Letter::A),
            'b' => Some(Letter::B),
            'c' => Some(Letter::C),
            'd' => Some(Letter::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// How to map option letters onto an item's stored paraphrase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LetterPolicy {
    /// a,b,c,d follow the stored paraphrase order.
    AsGiven,
    /// Seeded permutation, deterministic per (seed, item id).
    Shuffled(u64),
}

/// Bijection between option letters and an item's four paraphrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterAssignment {
    pub item_id: String,
    /// `mapping[letter.index()]` is the stored paraphrase index shown as that letter.
    pub mapping: [usize; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LetterAssignment {
    pub fn paraphrase_index(&self, letter: Letter) -> usize {
        self.mapping[letter.index()]
    }

    /// Letter shown for the given stored paraphrase index.
    pub fn letter_for_index(&self, index: usize) -> Letter {
        let pos = self
            .mapping
            .iter()
            .position(|&i| i == index)
            .expect("mapping is a bijection over 0..4");
        LETTERS[pos]
    }

    pub fn letter_for_best(&self, item: &MetaphorItem) -> Letter {
        self.letter_for_index(item.best_index())
    }
}

/// Assign option letters to an item's paraphrases under the given policy.
pub fn assign_letters(item: &MetaphorItem, policy: LetterPolicy) -> LetterAssignment {
    debug_assert_eq!(item.paraphrases.len(), 4);
    match policy {
        LetterPolicy::AsGiven => LetterAssignment {
            item_id: item.id.clone(),
            mapping: [0, 1, 2, 3],
            seed: None,
        },
        LetterPolicy::Shuffled(seed) => {
            let mut mapping = [0usize, 1, 2, 3];
            let mut rng = SplitMix64(derive_seed(seed, &format!("letters/{}", item.id)));
            shuffle_in_place(&mut mapping, &mut rng);
            LetterAssignment {
                item_id: item.id.clone(),
                mapping,
                seed: Some(seed),
            }
        }
    }
}
