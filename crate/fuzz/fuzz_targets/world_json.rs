#![no_main]

use lamp_core::world::WorldSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(w) = WorldSpec::from_json(s) {
        let json = w.to_json().expect("decoded world serializes");
        let back = WorldSpec::from_json(&json).expect("re-encoded world decodes");
        assert_eq!(back, w);
        assert_eq!(back.content_hash(), w.content_hash());
    }
});
