#![no_main]

use faultloop::kgraph::KnowledgeGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = KnowledgeGraph::from_canonical_json(data) {
        let json = g.to_canonical_json();
        let back = KnowledgeGraph::from_canonical_json(json.as_bytes()).expect("canonical json reloads");
        assert_eq!(back.to_canonical_json(), json);
        for c in g.components() {
            let _ = g.dependency_closure(c.id.as_str());
        }
    }
});
