#![no_main]

use lamp_core::eval::NodeMapBaseline;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(n) = NodeMapBaseline::from_bytes(data) {
        let bytes = n.to_bytes();
        assert_eq!(bytes.len(), n.byte_len());
        assert_eq!(
            NodeMapBaseline::from_bytes(&bytes)
                .expect("re-encoded node map decodes")
                .to_bytes(),
            bytes
        );
    }
});
