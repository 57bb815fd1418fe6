#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::providers::openai::{parse_chat_response, parse_embedding_response};

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(v) = serde_json::from_slice::<serde_json::Value>(rest) else { return };
    let _ = parse_chat_response(&v);
    let expected = usize::from(n % 8);
    if let Ok(vectors) = parse_embedding_response(&v, expected) {
        assert_eq!(vectors.len(), expected);
    }
});
