#![no_main]

use lamp_core::field::FieldModel;
use lamp_core::geometry::Pose;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = FieldModel::from_bytes(data) {
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), m.byte_len());
        assert_eq!(
            FieldModel::from_bytes(&bytes)
                .expect("re-encoded model decodes")
                .to_bytes(),
            bytes
        );
        // corrupt weights must surface as errors, not panics
        let _ = m.forward(&Pose::from_yaw([0.0, 0.0, 1.0], 0.0));
    }
});
