#![no_main]

use lamp_core::graph::TopoGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = TopoGraph::from_json(s) {
        let json = g.to_json().expect("decoded graph serializes");
        assert_eq!(
            TopoGraph::from_json(&json).expect("re-encoded graph decodes"),
            g
        );
        if let (Some(&a), Some(&b)) = (g.ids().first(), g.ids().last()) {
            let _ = lamp_core::graph::astar(&g, a, b);
        }
    }
});
