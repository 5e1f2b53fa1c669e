#![no_main]

use lamp_core::eval::EvalReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = EvalReport::from_json(s) {
        let _ = r.to_csv();
        let json = r.to_json().expect("decoded report serializes");
        assert_eq!(
            EvalReport::from_json(&json)
                .expect("re-encoded report decodes")
                .without_timings(),
            r.without_timings()
        );
    }
});
