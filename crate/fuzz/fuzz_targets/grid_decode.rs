#![no_main]

use lamp_core::eval::GridMapBaseline;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = GridMapBaseline::from_bytes(data) {
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), g.byte_len());
        assert_eq!(
            GridMapBaseline::from_bytes(&bytes)
                .expect("re-encoded grid decodes")
                .to_bytes(),
            bytes
        );
    }
});
