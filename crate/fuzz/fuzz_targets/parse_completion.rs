#![no_main]

use std::collections::BTreeSet;

use libfuzzer_sys::fuzz_target;
use propex_core::answer::parse_completion;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let allowed: BTreeSet<&str> = ["p1", "p2", "Tavenor"].into_iter().collect();
    let (_, cited) = parse_completion(src, &allowed);
    assert!(cited.iter().all(|c| allowed.contains(c.as_str())));
});
