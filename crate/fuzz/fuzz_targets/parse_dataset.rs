#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::eval::{parse_dataset, DatasetFormat};

fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(src) = std::str::from_utf8(rest) else { return };
    let format = if sel & 1 == 0 { DatasetFormat::HotpotQa } else { DatasetFormat::TwoWiki };
    let _ = parse_dataset(src, "fuzz", format);
});
