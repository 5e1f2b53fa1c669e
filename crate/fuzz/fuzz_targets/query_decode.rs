#![no_main]

use lamp_core::query::{query_from_bytes, query_to_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(z) = query_from_bytes(data) {
        let bytes = query_to_bytes(&z);
        assert_eq!(
            query_from_bytes(&bytes).expect("re-encoded query decodes"),
            z
        );
    }
});
