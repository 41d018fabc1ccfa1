//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use faultloop::kgraph::{
    load_topology, ComponentId, FlowSpec, KnowledgeGraph, ResourceSpec, ServiceDef, ServiceSpec, TopologyFormat,
};
use faultloop::scenario::{EventType, FailureEvent, Scenario, Severity};
use faultloop::twin::{TrafficFlow, TrafficMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn edgelist(text: &str) -> KnowledgeGraph {
    load_topology(text.as_bytes(), TopologyFormat::Edgelist).unwrap().graph
}

pub fn flow(id: &str, src: &str, dst: &str, mbps: f64, priority: u8) -> TrafficFlow {
    TrafficFlow {
        flow_id: id.into(),
        src: src.into(),
        dst: dst.into(),
        demand_mbps: mbps,
        priority,
    }
}

pub fn event(t: EventType, target: &str, ts: f64, sev: Severity) -> FailureEvent {
    FailureEvent::new(t, ComponentId::canonical(target), ts, sev)
}

/// Topology plus its traffic flows as graph components.
pub fn with_flows(topo: KnowledgeGraph, tm: &TrafficMatrix) -> KnowledgeGraph {
    topo.build_service_layer(&tm.to_service_spec()).unwrap()
}

/// The reference fiber-cut event, verbatim.
pub const REFERENCE_EVENT: &str = r#"{
  "event_type": "fiber_link_failure",
  "target": "B-C",
  "timestamp": 245.8,
  "severity": "high"
}"#;

/// Triangle where the direct A-C link is a long detour with spare capacity.
pub fn triangle() -> (KnowledgeGraph, TrafficMatrix) {
    let topo = edgelist("A B 1000 1\nB C 1000 1\nA C 1000 5\n");
    let tm = TrafficMatrix::new(vec![flow("F1", "A", "C", 400.0, 1), flow("F2", "B", "C", 300.0, 2)]);
    (with_flows(topo, &tm), tm)
}

/// Four-router chain whose backups cannot carry the rerouted load: cutting
/// B-C at t=10 overloads A-C, whose trip then overloads A-D.
pub fn cascade_chain() -> (KnowledgeGraph, TrafficMatrix, Scenario) {
    let topo = edgelist("A B 1000 1\nB C 1000 1\nC D 1000 1\nA C 600 5\nA D 400 20\n");
    let tm = TrafficMatrix::new(vec![flow("F1", "A", "D", 800.0, 1)]);
    let s = Scenario::new(
        "chain-cut",
        vec![event(EventType::FiberLinkFailure, "B-C", 10.0, Severity::High)],
    );
    (with_flows(topo, &tm), tm, s)
}

/// Eight routers on a primary chain with thin skip-one backups, flows
/// across the chain, services over the flows and shared resources over the
/// services. Dependency closures are deep and failures cascade.
pub fn deep_dependency() -> (KnowledgeGraph, TrafficMatrix) {
    let mut text = String::new();
    for i in 0..7 {
        text.push_str(&format!("R{i} R{} 1000 1\n", i + 1));
    }
    for i in 0..6 {
        text.push_str(&format!("R{i} R{} 350 4\n", i + 2));
    }
    let topo = edgelist(&text);
    let tm = TrafficMatrix::new(vec![
        flow("F0", "R0", "R7", 500.0, 1),
        flow("F1", "R1", "R6", 300.0, 2),
        flow("F2", "R2", "R5", 250.0, 3),
        flow("F3", "R7", "R0", 400.0, 1),
        flow("F4", "R3", "R4", 150.0, 2),
        flow("F5", "R6", "R1", 200.0, 3),
    ]);
    let mut spec = tm.to_service_spec();
    spec.services = vec![
        service("S0", &["F0", "F1"]),
        service("S1", &["F2", "F3"]),
        service("S2", &["F4", "F5", "S0"]),
    ];
    spec.resources = vec![
        ResourceSpec {
            id: "P0".into(),
            shared_by: vec!["S0".into(), "S1".into()],
        },
        ResourceSpec {
            id: "P1".into(),
            shared_by: vec!["S2".into(), "R3".into(), "R4".into()],
        },
    ];
    (topo.build_service_layer(&spec).unwrap(), tm)
}

fn service(id: &str, deps: &[&str]) -> ServiceDef {
    ServiceDef {
        id: id.into(),
        depends_on: deps.iter().map(|d| d.to_string()).collect(),
    }
}

/// A connected random graph on `n` routers with flows, services and a
/// shared resource.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (KnowledgeGraph, TrafficMatrix) {
    let mut text = String::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        text.push_str(&format!(
            "R{p} R{i} {} {}\n",
            rng.random_range(2..20) * 100,
            rng.random_range(1..10)
        ));
    }
    for _ in 0..n / 2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            text.push_str(&format!(
                "R{a} R{b} {} {}\n",
                rng.random_range(2..20) * 100,
                rng.random_range(1..10)
            ));
        }
    }
    let topo = edgelist(&text);
    let mut flows = Vec::new();
    for i in 0..n / 2 {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n);
        if a == b {
            b = (b + 1) % n;
        }
        flows.push(flow(
            &format!("F{i}"),
            &format!("R{a}"),
            &format!("R{b}"),
            f64::from(rng.random_range(1..60u32)) * 10.0,
            rng.random_range(1..=3),
        ));
    }
    let tm = TrafficMatrix::new(flows);
    let flow_ids: Vec<String> = tm.flows.iter().map(|f| f.flow_id.clone()).collect();
    let services: Vec<ServiceDef> = (0..3)
        .map(|i| ServiceDef {
            id: format!("S{i}"),
            depends_on: (0..rng.random_range(1..=3))
                .map(|_| flow_ids[rng.random_range(0..flow_ids.len())].clone())
                .collect(),
        })
        .collect();
    let spec = ServiceSpec {
        flows: tm
            .flows
            .iter()
            .map(|f| FlowSpec {
                id: f.flow_id.clone(),
                src: f.src.clone(),
                dst: f.dst.clone(),
                demand_mbps: f.demand_mbps,
                priority: f.priority,
            })
            .collect(),
        services,
        resources: vec![ResourceSpec {
            id: "P0".into(),
            shared_by: vec!["S0".into(), "S1".into(), format!("R{}", rng.random_range(0..n))],
        }],
    };
    (topo.build_service_layer(&spec).unwrap(), tm)
}
