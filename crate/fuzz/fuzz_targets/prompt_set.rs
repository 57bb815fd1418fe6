#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::prompts::PromptSet;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let _ = PromptSet::parse(src);
});
