#![no_main]

use libfuzzer_sys::fuzz_target;
use metaphor_eval::corpus::Corpus;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let _ = Corpus::from_jsonl_str(&text);
});
