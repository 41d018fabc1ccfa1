#![no_main]

use faultloop::kgraph::{load_topology, parse_service_spec, TopologyFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = parse_service_spec(data) {
        let base = load_topology(b"A B 1000 1\nB C 1000 1\nA C 500 3\n", TopologyFormat::Edgelist)
            .expect("fixed topology")
            .graph;
        let _ = base.build_service_layer(&spec);
    }
});
