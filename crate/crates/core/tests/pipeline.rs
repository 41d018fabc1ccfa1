mod common;

use faultloop::campaign::{iterations_csv, plot_csv, run_campaign, summary_text, CampaignReport, LoopConfig};
use faultloop::generator::Backend;
use faultloop::kgraph::{load_topology, ComponentKind, KnowledgeGraph, TopologyFormat};
use faultloop::mitigate::mitigate;
use faultloop::scenario::{parse_scenario, validate};
use faultloop::seed;
use faultloop::twin::{run, SimulationConfig, TrafficMatrix};
use rand::Rng;

use common::{data, flow, with_flows};

fn ion() -> (KnowledgeGraph, TrafficMatrix) {
    let bytes = std::fs::read(data("topology_zoo/Ion.graphml")).unwrap();
    let topo = load_topology(&bytes, TopologyFormat::Graphml).unwrap().graph;
    let routers: Vec<String> = topo
        .components_of(ComponentKind::Router)
        .map(|c| c.id.to_string())
        .collect();
    let mut rng = seed::rng(11, &[]);
    let flows = (0..30)
        .map(|i| {
            let a = rng.random_range(0..routers.len());
            let b = (a + rng.random_range(1..routers.len())) % routers.len();
            flow(&format!("F{i}"), &routers[a], &routers[b], 200.0, 1 + (i % 3) as u8)
        })
        .collect();
    let tm = TrafficMatrix::new(flows);
    (with_flows(topo, &tm), tm)
}

#[test]
fn canonical_graph_json_round_trips() {
    let (kg, _) = ion();
    let json = kg.to_canonical_json();
    let back = KnowledgeGraph::from_canonical_json(json.as_bytes()).unwrap();
    assert_eq!(back.to_canonical_json(), json);
    assert_eq!(back.count(ComponentKind::Flow), 30);
}

#[test]
fn generate_simulate_mitigate_on_a_real_topology() {
    let (kg, tm) = ion();
    let cfg = SimulationConfig {
        horizon_s: 300.0,
        ..SimulationConfig::default()
    };
    let mut ctx = faultloop::generator::GeneratorContext::new(kg.clone(), 5);
    ctx.constraints.horizon_s = 300.0;
    let s = Backend::Rule.propose(&ctx).unwrap();
    let s = parse_scenario(s.to_json().as_bytes()).unwrap();
    assert!(validate(&s, &kg).is_valid());
    let r = run(&s, &kg, &tm, &cfg).unwrap();
    assert_eq!(r.to_json(), run(&s, &kg, &tm, &cfg).unwrap().to_json());
    let m = mitigate(&s, &kg, &tm, &cfg, &r).unwrap();
    assert!(m.ranked.iter().all(|p| (0.0..=1.0).contains(&p.effectiveness)));
}

#[test]
fn campaign_reports_are_consistent() {
    let (kg, tm) = ion();
    let cfg = LoopConfig {
        iterations: 4,
        seed: 3,
        sim: SimulationConfig {
            horizon_s: 300.0,
            ..SimulationConfig::default()
        },
        ..LoopConfig::default()
    };
    let r = run_campaign(&cfg, &kg, &tm, &Backend::Rule).unwrap();
    assert_eq!(r.records.len(), 4);
    assert!(r.validity_rate > 0.0 && r.validity_rate <= 1.0);
    assert!(r.store.len() <= cfg.k);
    let best = r.records.iter().map(|x| x.impact).fold(0.0, f64::max);
    assert_eq!(r.max_impact, best);
    assert_eq!(iterations_csv(&r).lines().count(), 5);
    assert_eq!(plot_csv(&r).lines().count(), 5);
    assert!(summary_text(&r, None).starts_with("campaign seed 3"));
    let back: CampaignReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back.to_json(), r.to_json());
}
