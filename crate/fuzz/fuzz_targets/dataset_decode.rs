#![no_main]

use lamp_core::dataset::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::from_bytes(data) {
        let bytes = ds.to_bytes();
        assert_eq!(bytes.len(), ds.byte_len());
        assert_eq!(
            Dataset::from_bytes(&bytes).expect("re-encoded dataset decodes"),
            ds
        );
    }
});
