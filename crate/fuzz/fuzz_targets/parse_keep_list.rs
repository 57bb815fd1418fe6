#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::retrieval::parse_keep_list;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(reply) = std::str::from_utf8(rest) else { return };
    let n = usize::from(n % 32);
    if let Some(kept) = parse_keep_list(reply, n) {
        assert!(kept.iter().all(|&i| i < n));
    }
});
