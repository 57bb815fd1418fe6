#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::sparse::CscMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = CscMatrix::decode(data) {
        let again = CscMatrix::decode(&m.encode()).expect("re-encoded matrix decodes");
        assert_eq!(again.encode(), m.encode());
    }
});
