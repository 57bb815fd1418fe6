#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::indexer::parse_corpus;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(passages) = parse_corpus(src, "fuzz") {
        let mut ids: Vec<_> = passages.iter().map(|p| p.passage_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), passages.len());
    }
});
