#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::eval::EvalReport;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(report) = EvalReport::from_jsonl(src) {
        let bytes = report.to_jsonl();
        let again = EvalReport::from_jsonl(std::str::from_utf8(&bytes).unwrap()).expect("report re-parses");
        assert_eq!(again.to_jsonl(), bytes);
    }
});
