#![no_main]

use faultloop::kgraph::{load_topology, ComponentKind, TopologyFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ingest) = load_topology(data, TopologyFormat::Edgelist) {
        let g = ingest.graph;
        let text = g.to_edgelist();
        let back = load_topology(text.as_bytes(), TopologyFormat::Edgelist)
            .expect("edgelist reloads")
            .graph;
        for kind in [ComponentKind::Router, ComponentKind::Link] {
            assert_eq!(back.count(kind), g.count(kind));
        }
    }
});
