#![no_main]

use libfuzzer_sys::fuzz_target;
use propex_core::sparse::{decode_vectors, encode_vectors};

fuzz_target!(|data: &[u8]| {
    if let Ok((dim, rows)) = decode_vectors(data) {
        assert!(rows.iter().all(|r| r.len() == dim));
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let bytes = encode_vectors(dim, &refs);
        let (dim2, rows2) = decode_vectors(&bytes).expect("re-encoded vectors decode");
        assert_eq!(dim, dim2);
        assert_eq!(rows.len(), rows2.len());
    }
});
