#![no_main]

use libfuzzer_sys::fuzz_target;
use metaphor_eval::corpus::{Corpus, MetaphorItem, Paraphrase, Source};
use metaphor_eval::prompts::RationaleBank;
use std::sync::OnceLock;

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
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
        .expect("fixed corpus is valid")
    })
}

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let _ = RationaleBank::from_jsonl_str(&text, corpus());
});
