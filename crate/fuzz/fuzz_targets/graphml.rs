#![no_main]

use faultloop::kgraph::{load_topology, KnowledgeGraph, TopologyFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ingest) = load_topology(data, TopologyFormat::Graphml) {
        let json = ingest.graph.to_canonical_json();
        let back = KnowledgeGraph::from_canonical_json(json.as_bytes()).expect("canonical json reloads");
        assert_eq!(back.to_canonical_json(), json);
    }
});
