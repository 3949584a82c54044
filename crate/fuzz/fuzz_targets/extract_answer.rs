#![no_main]

use libfuzzer_sys::fuzz_target;

// The answer extractor must be total over arbitrary completion bytes.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let parsed = metaphor_eval::parser::extract_answer(&text);
    if let Some(span) = &parsed.raw_span {
        assert!(text.contains(span.as_str()));
        assert!(parsed.letter.is_some());
    }
});
