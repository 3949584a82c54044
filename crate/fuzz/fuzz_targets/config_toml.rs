#![no_main]

use libfuzzer_sys::fuzz_target;
use metaphor_eval::config::Config;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let _ = Config::from_toml_str(&text);
});
