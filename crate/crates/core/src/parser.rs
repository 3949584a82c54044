//! Multiple-choice answer extraction from completion text.
//!
//! A completion counts as an answer only when it contains one of the two
//! anchor phrases ("the answer is" / "the speaker is saying") followed by a
//! letter a-d and a right parenthesis. Anything else is an invalid response:
//! it is excluded from score means and tallied separately, never an error.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Letter, LetterAssignment, MetaphorItem};

/// Which anchor phrase matched in the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    AnswerIs,
    SpeakerIsSaying,
    None,
}

/// Result of scanning one completion for an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub letter: Option<Letter>,
    pub matched_anchor: Anchor,
    /// The matched anchor-plus-letter substring, for audit trails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_span: Option<String>,
}

impl ParsedAnswer {
    pub fn invalid() -> Self {
        ParsedAnswer {
            letter: None,
            matched_anchor: Anchor::None,
            raw_span: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.letter.is_some()
    }
}

fn anchor_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Case-insensitive, tolerant of any whitespace run between words.
        // The letter must sit directly against a right parenthesis.
        Regex::new(r"(?i)\b(the\s+answer\s+is|the\s+speaker\s+is\s+saying)\s+([a-d])\)")
            .expect("anchor regex compiles")
    })
}

/// Every anchored answer in the text, in order of appearance.
pub fn extract_all(completion_text: &str) -> Vec<ParsedAnswer> {
    anchor_regex()
        .captures_iter(completion_text)
        .map(|m| {
            let phrase = m.get(1).expect("group 1 always present").as_str();
            let anchor = if phrase.to_ascii_lowercase().starts_with("the answer") {
                Anchor::AnswerIs
            } else {
                Anchor::SpeakerIsSaying
            };
            let letter_str = m.get(2).expect("group 2 always present").as_str();
            let letter = Letter::from_char(letter_str.chars().next().expect("non-empty match"))
                .expect("regex group restricted to a-d");
            ParsedAnswer {
                letter: Some(letter),
                matched_anchor: anchor,
                raw_span: Some(m.get(0).expect("whole match").as_str().to_string()),
            }
        })
        .collect()
}

/// Scan completion text for an answer. Total over arbitrary input; when
/// several anchors occur, the last one wins, because the answer clause of a
/// rationale terminates it while earlier matches may restate examples.
pub fn extract_answer(completion_text: &str) -> ParsedAnswer {
    extract_all(completion_text)
        .pop()
        .unwrap_or_else(ParsedAnswer::invalid)
}

/// A parsed answer mapped through the item's letter assignment to an
/// appropriateness score. Invalid answers carry no score and are tallied
/// separately by the stats layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub item_id: String,
    pub letter: Option<Letter>,
    pub appropriateness: Option<u8>,
}

impl ScoredAnswer {
    pub fn is_valid(&self) -> bool {
        self.appropriateness.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParserError {
    #[error("letter map is for item {map_id}, not {item_id}")]
    ItemMismatch { map_id: String, item_id: String },
}

/// Map a parsed letter to the appropriateness of the paraphrase it denotes.
pub fn score_answer(
    parsed: &ParsedAnswer,
    letter_map: &LetterAssignment,
    item: &MetaphorItem,
) -> Result<ScoredAnswer, ParserError> {
    if letter_map.item_id != item.id {
        return Err(ParserError::ItemMismatch {
            map_id: letter_map.item_id.clone(),
            item_id: item.id.clone(),
        });
    }
    let appropriateness = parsed.letter.map(|letter| {
        let idx = letter_map.paraphrase_index(letter);
        item.paraphrases[idx].appropriateness
    });
    Ok(ScoredAnswer {
        item_id: item.id.clone(),
        letter: parsed.letter,
        appropriateness,
    })
}
