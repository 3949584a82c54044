//! Deterministic mock backend.
//!
//! The paper's models are closed and deprecated, so reproducible testing
//! needs a stand-in with predictable behavior. The mock reads the option
//! block at the tail of the prompt (the four lettered lines every condition
//! ends with) and answers according to its policy.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::corpus::{Corpus, Letter, LETTERS};
use crate::util::{derive_seed, sha256_hex, SplitMix64};

use super::{Backend, BackendError, RequestParams};

#[derive(Debug, Clone)]
pub enum MockPolicy {
    /// First (needle, completion) whose needle occurs in the prompt wins;
    /// `fallback` answers everything else.
    Scripted {
        responses: Vec<(String, String)>,
        fallback: Option<String>,
    },
    /// Answer with the option carrying appropriateness 4, looked up from the
    /// corpus by option text.
    AlwaysBest,
    /// Uniform letter choice, deterministic per (seed, prompt bytes).
    UniformRandom { seed: u64 },
    /// Always the same letter.
    FixedLetter(Letter),
}

pub struct MockBackend {
    id: String,
    policy: MockPolicy,
    /// Option text -> appropriateness, for the corpus-aware policies.
    options: HashMap<String, u8>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(id: impl Into<String>, policy: MockPolicy) -> Self {
        MockBackend {
            id: id.into(),
            policy,
            options: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Mock that knows the corpus answer key. Fails if two items share an
    /// option text with different appropriateness, which would make the
    /// lookup ambiguous.
    pub fn with_corpus(
        id: impl Into<String>,
        policy: MockPolicy,
        corpus: &Corpus,
    ) -> Result<Self, BackendError> {
        let mut options = HashMap::new();
        for item in corpus.items() {
            for p in &item.paraphrases {
                if let Some(&existing) = options.get(&p.text) {
                    if existing != p.appropriateness {
                        return Err(BackendError::InvalidParams(format!(
                            "option text {:?} appears with appropriateness {existing} and {}",
                            p.text, p.appropriateness
                        )));
                    }
                }
                options.insert(p.text.clone(), p.appropriateness);
            }
        }
        Ok(MockBackend {
            id: id.into(),
            policy,
            options,
            calls: AtomicUsize::new(0),
        })
    }

    /// Number of completions actually served (cache hits never reach here).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// The last four lines of every prompt are the target's lettered options.
    fn tail_options(prompt: &str) -> Option<[(Letter, &str); 4]> {
        let lines: Vec<&str> = prompt.lines().collect();
        if lines.len() < 4 {
            return None;
        }
        let tail = &lines[lines.len() - 4..];
        let mut out = [(Letter::A, ""); 4];
        for (i, (letter, line)) in LETTERS.iter().zip(tail).enumerate() {
            let prefix = format!("{letter}) ");
            let text = line.strip_prefix(&prefix)?;
            out[i] = (*letter, text);
        }
        Some(out)
    }

    fn answer(&self, letter: Letter, text: Option<&str>) -> String {
        match text {
            Some(text) => format!("The answer is {letter}) {text}"),
            None => format!("The answer is {letter})"),
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete_once(&self, prompt: &str, _params: &RequestParams) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.policy {
            MockPolicy::Scripted {
                responses,
                fallback,
            } => responses
                .iter()
                .find(|(needle, _)| prompt.contains(needle))
                .map(|(_, completion)| completion.clone())
                .or_else(|| fallback.clone())
                .ok_or_else(|| BackendError::Malformed("no scripted response matched".into())),
            MockPolicy::AlwaysBest => {
                let options = Self::tail_options(prompt).ok_or_else(|| {
                    BackendError::Malformed("prompt does not end with an option block".into())
                })?;
                let best = options
                    .iter()
                    .find(|(_, text)| self.options.get(*text).copied() == Some(4))
                    .ok_or_else(|| {
                        BackendError::Malformed("no appropriateness-4 option recognized".into())
                    })?;
                Ok(self.answer(best.0, Some(best.1)))
            }
            MockPolicy::UniformRandom { seed } => {
                let digest = sha256_hex(prompt.as_bytes());
                let mut rng = SplitMix64(derive_seed(*seed, &digest));
                let letter = LETTERS[rng.next_below(4) as usize];
                let text = Self::tail_options(prompt)
                    .and_then(|opts| opts.iter().find(|(l, _)| *l == letter).map(|(_, t)| *t))
                    .map(str::to_string);
                Ok(self.answer(letter, text.as_deref()))
            }
            MockPolicy::FixedLetter(letter) => {
                let text = Self::tail_options(prompt)
                    .and_then(|opts| opts.iter().find(|(l, _)| l == letter).map(|(_, t)| *t))
                    .map(str::to_string);
                Ok(self.answer(*letter, text.as_deref()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROMPT: &str = "Choose the most appropriate paraphrase of the first sentence.\n\n\
\"A bagpipe is a newborn baby.\"\n\
a) A bagpipe is loud.\n\
b) A bagpipe is delicate.\n\
c) A bagpipe is a musical instrument.\n\
d) A bagpipe is quiet.";

    fn corpus() -> Corpus {
        use crate::corpus::{MetaphorItem, Paraphrase, Source};
        Corpus::from_items(vec![MetaphorItem {
            id: "nl001".into(),
            sentence: "A bagpipe is a newborn baby.".into(),
            subject: Some("A bagpipe".into()),
            object: Some("a newborn baby".into()),
            source: Source::Nonliterary,
            comprehensibility: None,
            familiarity: None,
            paraphrases: vec![
                Paraphrase {
                    text: "A bagpipe is loud.".into(),
                    appropriateness: 4,
                },
                Paraphrase {
                    text: "A bagpipe is delicate.".into(),
                    appropriateness: 3,
                },
                Paraphrase {
                    text: "A bagpipe is a musical instrument.".into(),
                    appropriateness: 2,
                },
                Paraphrase {
                    text: "A bagpipe is quiet.".into(),
                    appropriateness: 1,
                },
            ],
            excluded: None,
        }])
        .unwrap()
    }

    #[test]
    fn scripted_map_echoes() {
        let backend = MockBackend::new(
            "mock",
            MockPolicy::Scripted {
                responses: vec![(
                    "bagpipe".into(),
                    "The answer is a) A bagpipe is loud.".into(),
                )],
                fallback: None,
            },
        );
        let text = backend
            .complete_once(PROMPT, &RequestParams::new("m"))
            .unwrap();
        assert_eq!(text, "The answer is a) A bagpipe is loud.");
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn always_best_picks_appropriateness_four() {
        let backend =
            MockBackend::with_corpus("mock-best", MockPolicy::AlwaysBest, &corpus()).unwrap();
        let text = backend
            .complete_once(PROMPT, &RequestParams::new("m"))
            .unwrap();
        assert_eq!(text, "The answer is a) A bagpipe is loud.");
    }

    #[test]
    fn always_best_follows_shuffled_options() {
        let backend =
            MockBackend::with_corpus("mock-best", MockPolicy::AlwaysBest, &corpus()).unwrap();
        let shuffled = "\
a) A bagpipe is quiet.\n\
b) A bagpipe is a musical instrument.\n\
c) A bagpipe is loud.\n\
d) A bagpipe is delicate.";
        let text = backend
            .complete_once(shuffled, &RequestParams::new("m"))
            .unwrap();
        assert_eq!(text, "The answer is c) A bagpipe is loud.");
    }

    #[test]
    fn uniform_random_is_deterministic_per_prompt() {
        let backend = MockBackend::new("mock-rand", MockPolicy::UniformRandom { seed: 5 });
        let a = backend
            .complete_once(PROMPT, &RequestParams::new("m"))
            .unwrap();
        let b = backend
            .complete_once(PROMPT, &RequestParams::new("m"))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_random_covers_all_letters() {
        let backend = MockBackend::new("mock-rand", MockPolicy::UniformRandom { seed: 5 });
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..200 {
            let prompt = format!("{PROMPT}\n\nvariant {i}");
            let text = backend
                .complete_once(&prompt, &RequestParams::new("m"))
                .unwrap();
            let parsed = crate::parser::extract_answer(&text);
            seen.insert(parsed.letter.unwrap());
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn fixed_letter_answers_that_letter() {
        let backend = MockBackend::new("mock-c", MockPolicy::FixedLetter(Letter::C));
        let text = backend
            .complete_once(PROMPT, &RequestParams::new("m"))
            .unwrap();
        assert_eq!(text, "The answer is c) A bagpipe is a musical instrument.");
    }
}
