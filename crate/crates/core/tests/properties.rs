//! Property tests over the parsing, hashing, and statistics invariants.

use proptest::prelude::*;

use metaphor_eval::client::{cache_key, RequestParams};
use metaphor_eval::corpus::{
    assign_letters, LetterPolicy, MetaphorItem, Paraphrase, Source, LETTERS,
};
use metaphor_eval::parser::extract_answer;
use metaphor_eval::stats::{bootstrap_ci_values, pearson, OrdinalModel};

fn item_with_order(order: [u8; 4]) -> MetaphorItem {
    let texts = ["loud", "delicate", "an instrument", "quiet"];
    MetaphorItem {
        id: "p1".into(),
        sentence: "A bagpipe is a newborn baby.".into(),
        subject: Some("A bagpipe".into()),
        object: Some("a newborn baby".into()),
        source: Source::Nonliterary,
        comprehensibility: None,
        familiarity: None,
        paraphrases: order
            .iter()
            .map(|&score| Paraphrase {
                text: format!("A bagpipe is {}.", texts[score as usize - 1]),
                appropriateness: score,
            })
            .collect(),
        excluded: None,
    }
}

proptest! {
    // extract_answer is total and self-consistent on arbitrary input
    #[test]
    fn extractor_never_panics(text in ".{0,400}") {
        let parsed = extract_answer(&text);
        if let Some(span) = &parsed.raw_span {
            prop_assert!(text.contains(span.as_str()));
            prop_assert!(parsed.letter.is_some());
        } else {
            prop_assert!(parsed.letter.is_none());
        }
    }

    // the last anchor in the text decides the letter
    #[test]
    fn last_anchor_wins(
        prefix in "[a-zA-Z0-9 .,]{0,80}",
        middle in "[a-zA-Z0-9 .,]{0,80}",
        first_letter in 0usize..4,
        second_letter in 0usize..4,
        first_is_answer in any::<bool>(),
        second_is_answer in any::<bool>(),
    ) {
        let letters = ['a', 'b', 'c', 'd'];
        let anchor = |is_answer: bool, letter: char| if is_answer {
            format!("the answer is {letter})")
        } else {
            format!("the speaker is saying {letter})")
        };
        let text = format!(
            "{prefix} {} {middle} {}",
            anchor(first_is_answer, letters[first_letter]),
            anchor(second_is_answer, letters[second_letter]),
        );
        let parsed = extract_answer(&text);
        prop_assert_eq!(parsed.letter.map(|l| l.as_char()), Some(letters[second_letter]));
    }

    // any single byte flip in the prompt changes the cache key
    #[test]
    fn prompt_byte_flip_changes_digest(
        prompt in proptest::collection::vec(any::<u8>(), 1..200),
        flip_index in any::<prop::sample::Index>(),
        flip_bit in 0u8..8,
    ) {
        let params = RequestParams::new("m");
        let index = flip_index.index(prompt.len());
        let mut flipped = prompt.clone();
        flipped[index] ^= 1 << flip_bit;
        let original = cache_key("b", "m", &prompt, &params);
        let changed = cache_key("b", "m", &flipped, &params);
        prop_assert_ne!(original, changed);
    }

    // shuffled letter maps stay bijective and invert cleanly
    #[test]
    fn letter_assignment_is_a_bijection(seed in any::<u64>(), order in 0usize..24) {
        // pick one of the 24 stored orders
        let mut scores = [1u8, 2, 3, 4];
        let mut k = order;
        for i in (1..4).rev() {
            let j = k % (i + 1);
            scores.swap(i, j);
            k /= i.max(1);
        }
        let item = item_with_order(scores);
        let assignment = assign_letters(&item, LetterPolicy::Shuffled(seed));
        let mut seen = [false; 4];
        for letter in LETTERS {
            let idx = assignment.paraphrase_index(letter);
            prop_assert!(!seen[idx]);
            seen[idx] = true;
            prop_assert_eq!(assignment.letter_for_index(idx), letter);
        }
        // the best letter maps back to the appropriateness-4 paraphrase
        let best = assignment.letter_for_best(&item);
        let idx = assignment.paraphrase_index(best);
        prop_assert_eq!(item.paraphrases[idx].appropriateness, 4);
    }

    // bootstrap intervals are ordered, inside the score range, and
    // deterministic per seed
    #[test]
    fn bootstrap_interval_is_sane(
        values in proptest::collection::vec(1u8..=4, 1..60),
        seed in any::<u64>(),
    ) {
        let a = bootstrap_ci_values(&values, 300, 0.95, seed).unwrap();
        let b = bootstrap_ci_values(&values, 300, 0.95, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.ci_low <= a.ci_high);
        prop_assert!(a.ci_low >= 1.0 && a.ci_high <= 4.0);
        prop_assert!(a.point >= 1.0 && a.point <= 4.0);
    }

    // pearson is symmetric and bounded
    #[test]
    fn pearson_symmetric_and_bounded(
        pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let result = pearson(&x, &y);
        prop_assume!(result.is_ok());
        let forward = result.unwrap();
        let backward = pearson(&y, &x).unwrap();
        prop_assert!((forward.r - backward.r).abs() < 1e-12);
        prop_assert!(forward.r.abs() <= 1.0);
        prop_assert!((0.0..=1.0).contains(&forward.p));
    }

    // proportional-odds category probabilities are a distribution for any
    // ordered thresholds
    #[test]
    fn ordinal_probs_form_a_distribution(
        t1 in -4.0f64..4.0,
        gap1 in 0.01f64..3.0,
        gap2 in 0.01f64..3.0,
        beta in -3.0f64..3.0,
        x in -5.0f64..5.0,
    ) {
        let params = [t1, t1 + gap1, t1 + gap1 + gap2, beta];
        let probs = OrdinalModel::category_probs(&params, x);
        for p in probs {
            prop_assert!(p > 0.0);
        }
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }
}
