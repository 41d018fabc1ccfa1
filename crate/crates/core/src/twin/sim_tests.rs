use proptest::prelude::*;

use super::*;
use crate::kgraph::{load_topology, ComponentId, KnowledgeGraph, TopologyFormat};
use crate::mitigate::{MitigationAction, MitigationPlan};
use crate::scenario::{EventType, FailureEvent, Scenario, Severity};

fn graph(edges: &str) -> KnowledgeGraph {
    load_topology(edges.as_bytes(), TopologyFormat::Edgelist).unwrap().graph
}

fn flows(spec: &[(&str, &str, &str, f64)]) -> TrafficMatrix {
    TrafficMatrix::new(
        spec.iter()
            .map(|&(id, s, d, mbps)| TrafficFlow {
                flow_id: id.into(),
                src: s.into(),
                dst: d.into(),
                demand_mbps: mbps,
                priority: 1,
            })
            .collect(),
    )
}

fn ev(t: EventType, target: &str, ts: f64, sev: Severity) -> FailureEvent {
    FailureEvent::new(t, ComponentId::canonical(target), ts, sev)
}

fn state(kg: &KnowledgeGraph, tm: &TrafficMatrix) -> NetworkState {
    let mut s = NetworkState::new(kg, tm).unwrap();
    let r = s.compute_routes();
    s.install_all(r, 0.0);
    s.assign_flows(0.0);
    s
}

fn util(s: &NetworkState, link: &str) -> f64 {
    s.links.iter().find(|l| l.id.as_str() == link).unwrap().utilization()
}

#[test]
fn chain_route_and_utilization() {
    let kg = graph("A B\nB C\n");
    let tm = flows(&[("F1", "A", "C", 500.0)]);
    let s = state(&kg, &tm);
    let map = s.routing_map();
    let path: Vec<&str> = map["F1"].iter().map(|l| l.as_str()).collect();
    assert_eq!(path, ["A-B", "B-C"]);
    assert_eq!(util(&s, "A-B"), 0.5);
    assert_eq!(util(&s, "B-C"), 0.5);
    assert_eq!(s.routers[0].cpu_load(), 0.5);
    let k = s.kpis(0.0, &SimulationConfig::default(), None);
    // Two hops of 1 ms at m(0.5) = 2; routers are far below their budget.
    assert_eq!(k.mean_latency_ms, 4.0);
    assert_eq!(k.loss_fraction, 0.0);
}

#[test]
fn triangle_prefers_cheaper_two_hop_path() {
    let kg = graph("A B 1000 1\nB C 1000 1\nA C 1000 3\n");
    let s = state(&kg, &flows(&[("F1", "A", "C", 10.0)]));
    let map = s.routing_map();
    let path: Vec<&str> = map["F1"].iter().map(|l| l.as_str()).collect();
    assert_eq!(path, ["A-B", "B-C"]);
    assert_eq!(s.flows[0].route.as_ref().unwrap().cost, 2.0);
}

#[test]
fn zero_flows_means_idle_network() {
    let kg = graph("A B\nB C\n");
    let s = state(&kg, &TrafficMatrix::default());
    assert!(s.links.iter().all(|l| l.utilization() == 0.0));
    let k = s.kpis(0.0, &SimulationConfig::default(), None);
    assert_eq!((k.loss_fraction, k.max_utilization), (0.0, 0.0));
}

#[test]
fn overlapping_flows_sum_and_lose_excess() {
    let kg = graph("A B\n");
    let s = state(&kg, &flows(&[("F1", "A", "B", 600.0), ("F2", "A", "B", 600.0)]));
    assert!((util(&s, "A-B") - 1.2).abs() < 1e-12);
    let k = s.kpis(0.0, &SimulationConfig::default(), None);
    assert!((k.loss_fraction - 0.2 / 1.2).abs() < 1e-12);
    assert!((k.delivered_mbps - 1000.0).abs() < 1e-9);
}

#[test]
fn event_semantics() {
    let cfg = SimulationConfig::default();
    let kg = graph("A B\nB C\n");
    let mut s = state(&kg, &flows(&[("F1", "A", "C", 100.0)]));

    s.apply_event(&ev(EventType::FiberLinkFailure, "A-B", 1.0, Severity::Medium), &cfg)
        .unwrap();
    assert_eq!(s.links[0].capacity_mbps(), 500.0);
    s.apply_event(&ev(EventType::FiberLinkFailure, "B-C", 1.0, Severity::Low), &cfg)
        .unwrap();
    assert_eq!(s.links[1].capacity_mbps(), 800.0);

    s.apply_event(&ev(EventType::TrafficSpike, "F1", 2.0, Severity::Low), &cfg)
        .unwrap();
    assert_eq!(s.flows[0].demand_mbps, 200.0);
    let custom = ev(EventType::TrafficSpike, "C", 2.0, Severity::Low).with_param("spike_multiplier", 3.0);
    s.apply_event(&custom, &cfg).unwrap();
    assert_eq!(s.flows[0].demand_mbps, 600.0);
    assert!(s
        .apply_event(&ev(EventType::TrafficSpike, "A", 2.0, Severity::Low), &cfg)
        .is_err());

    s.apply_event(&ev(EventType::RouterOverload, "A", 3.0, Severity::High), &cfg)
        .unwrap();
    assert_eq!(s.routers[0].extra_cpu, 20.0);
    s.assign_flows(3.0);
    // cpu 20 + 0.6 against 10 units: factor 1 + 10.6 / 10.
    assert!((s.routers[0].latency_factor() - 2.06).abs() < 1e-12);

    s.apply_event(&ev(EventType::NodeFailure, "B", 4.0, Severity::High), &cfg)
        .unwrap();
    assert!(!s.routers[1].up);
    assert!(s.links.iter().all(|l| !l.up));
    let again = s.apply_event(&ev(EventType::CascadingTrip, "A-B", 5.0, Severity::High), &cfg);
    assert!(again.unwrap_err().contains("already down"));
}

#[test]
fn severity_tables_are_monotone() {
    let cfg = SimulationConfig::default();
    let pairs = [(Severity::Low, Severity::Medium), (Severity::Medium, Severity::High)];
    for (lo, hi) in pairs {
        assert!(cfg.fiber_capacity_factor.get(lo) > cfg.fiber_capacity_factor.get(hi));
        assert!(cfg.overload_cpu_factor.get(lo) < cfg.overload_cpu_factor.get(hi));
        assert!(cfg.spike_multiplier.get(lo) < cfg.spike_multiplier.get(hi));
    }
}

#[test]
fn reference_event_downs_link_and_reroutes() {
    let kg = graph("A B\nB C\nC D\nA D 1000 5\n");
    let tm = flows(&[("F1", "B", "C", 100.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "B-C", 245.8, Severity::High)]);
    let r = run(&s, &kg, &tm, &SimulationConfig::default()).unwrap();
    assert_eq!(r.down, vec![ComponentId::canonical("B-C")]);
    let path: Vec<&str> = r.per_flow["F1"].path.iter().map(|l| l.as_str()).collect();
    assert_eq!(path, ["A-B", "A-D", "C-D"]);
    // Longest new path has 3 hops.
    assert_eq!(r.reroute_convergence[&0], 80.0);
    let blackholed = r.samples.iter().find(|k| k.t == 245.0).unwrap();
    assert_eq!(blackholed.loss_fraction, 0.0);
    let after = r.samples.iter().find(|k| k.t == 246.0).unwrap();
    assert_eq!(after.loss_fraction, 0.0);
    let seg = r.trajectory.iter().find(|k| k.t == 245.8).unwrap();
    assert_eq!(seg.loss_fraction, 1.0);
}

#[test]
fn chain_cut_loses_everything_after_the_event() {
    let kg = graph("A B\nB C\n");
    let tm = flows(&[("F1", "A", "C", 100.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "B-C", 10.0, Severity::High)]);
    let r = run(&s, &kg, &tm, &SimulationConfig::default()).unwrap();
    for k in &r.samples {
        let want = if k.t < 10.0 { 0.0 } else { 1.0 };
        assert_eq!(k.loss_fraction, want, "t={}", k.t);
    }
    assert_eq!(r.samples.len(), 3601);
    assert_eq!(r.per_flow["F1"].dropped_mbps, 100.0);
    assert!(r.per_flow["F1"].path.is_empty());
    assert_eq!(r.samples.last().unwrap().impacted_nodes, 2);
}

#[test]
fn failing_an_idle_link_changes_nothing() {
    let kg = graph("A B\nB C\nC D\n");
    let tm = flows(&[("F1", "A", "B", 300.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "C-D", 10.0, Severity::High)]);
    let r = run(&s, &kg, &tm, &SimulationConfig::default()).unwrap();
    assert!(r.samples.iter().all(|k| k.same_kpis(&r.baseline)));
    assert!(r.samples.iter().all(|k| k.impacted_nodes == 0));
    assert!(r.reroute_convergence.is_empty());
}

/// Chain A-B-C-D with backups A-C (600) and A-D (400) that cannot carry
/// the 800 Mbps flow once B-C is cut.
fn cascade_fixture() -> (KnowledgeGraph, TrafficMatrix, Scenario) {
    let kg = graph("A B 1000 1\nB C 1000 1\nC D 1000 1\nA C 600 5\nA D 400 20\n");
    let tm = flows(&[("F1", "A", "D", 800.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "B-C", 10.0, Severity::High)]);
    (kg, tm, s)
}

#[test]
fn overloaded_backups_trip_in_sequence() {
    let (kg, tm, s) = cascade_fixture();
    let cfg = SimulationConfig::default();
    let r = run(&s, &kg, &tm, &cfg).unwrap();
    assert_eq!(r.induced_events.len(), 2);
    let (a, b) = (&r.induced_events[0], &r.induced_events[1]);
    assert_eq!((a.target.as_str(), a.cause), ("A-C", Some(0)));
    assert_eq!((b.target.as_str(), b.cause), ("A-D", Some(1)));
    // Convergence 50 + 2 * 10 ms, then the grace period.
    assert!((a.timestamp - 15.07).abs() < 1e-9);
    assert!((b.timestamp - (15.07 + 0.06 + 5.0)).abs() < 1e-9);
    assert_eq!(r.cascade_depth, 2);
    assert_eq!(r.samples.last().unwrap().loss_fraction, 1.0);
}

#[test]
fn grace_period_and_baseline_congestion_do_not_trip() {
    let (kg, tm, s) = cascade_fixture();
    let cfg = SimulationConfig {
        cascade_grace_s: 4000.0,
        ..Default::default()
    };
    assert!(run(&s, &kg, &tm, &cfg).unwrap().induced_events.is_empty());

    let kg = graph("A B\n");
    let tm = flows(&[("F1", "A", "B", 1200.0)]);
    let r = run_baseline(&kg, &tm, &SimulationConfig::default()).unwrap();
    assert!(r.induced_events.is_empty());
    assert!(r.down.is_empty());

    let kg = graph("A B\nB C\nA C 1000 5\n");
    let tm = flows(&[("F1", "A", "C", 990.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "A-B", 1.0, Severity::High)]);
    assert!(run(&s, &kg, &tm, &SimulationConfig::default())
        .unwrap()
        .induced_events
        .is_empty());
}

#[test]
fn relief_before_grace_prevents_trip() {
    let (kg, tm, s) = cascade_fixture();
    let plan = MitigationPlan {
        id: "boost".into(),
        trigger_s: 13.07,
        actions: vec![MitigationAction::CapacityBoost {
            link: ComponentId::canonical("A-C"),
            factor: 1.5,
        }],
    };
    let r = run_with_plan(&s, &kg, &tm, &SimulationConfig::default(), Some(&plan)).unwrap();
    assert!(r.induced_events.is_empty());
    assert_eq!(r.samples.last().unwrap().loss_fraction, 0.0);
}

#[test]
fn rollback_restores_baseline() {
    let (kg, tm, s) = cascade_fixture();
    let cfg = SimulationConfig::default();
    let plan = MitigationPlan {
        id: "rollback".into(),
        trigger_s: 16.0,
        actions: vec![MitigationAction::Rollback { events: vec![0] }],
    };
    let r = run_with_plan(&s, &kg, &tm, &cfg, Some(&plan)).unwrap();
    assert_eq!(r.induced_events.len(), 1);
    assert!(r.down.is_empty());
    assert!(r
        .samples
        .iter()
        .filter(|k| k.t >= 16.0)
        .all(|k| k.same_kpis(&r.baseline)));
}

#[test]
fn empty_plan_is_identity() {
    let (kg, tm, s) = cascade_fixture();
    let cfg = SimulationConfig::default();
    let plan = MitigationPlan {
        id: "noop".into(),
        trigger_s: 10.0,
        actions: vec![],
    };
    let a = run(&s, &kg, &tm, &cfg).unwrap();
    let b = run_with_plan(&s, &kg, &tm, &cfg, Some(&plan)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn unknown_traffic_endpoint_is_an_integrity_error() {
    let kg = graph("A B\n");
    let tm = flows(&[("F1", "A", "Z", 1.0)]);
    let err = run_baseline(&kg, &tm, &SimulationConfig::default()).unwrap_err();
    assert!(matches!(err, TwinError::Integrity(_)));
}

#[test]
fn window_summary_is_time_weighted() {
    let kg = graph("A B\nB C\n");
    let tm = flows(&[("F1", "A", "C", 100.0)]);
    let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "B-C", 900.0, Severity::High)]);
    let cfg = SimulationConfig {
        horizon_s: 1000.0,
        ..Default::default()
    };
    let r = run(&s, &kg, &tm, &cfg).unwrap();
    assert!((r.window_summary(0.0).loss_fraction - 0.1).abs() < 1e-12);
    assert_eq!(r.window_summary(900.0).loss_fraction, 1.0);
    assert_eq!(r.window_summary(1000.0).loss_fraction, 1.0);
    assert_eq!(r.window_summary(0.0).impacted_nodes, 0.2);
}

#[test]
fn kpi_csv_layout() {
    let kg = graph("A B\n");
    let cfg = SimulationConfig {
        horizon_s: 2.0,
        sample_interval_s: 0.5,
        ..Default::default()
    };
    let r = run_baseline(&kg, &flows(&[("F1", "A", "B", 1.0)]), &cfg).unwrap();
    let csv = r.kpi_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], KpiSample::CSV_HEADER);
    assert_eq!(lines.len(), 6);
    assert!(lines[2].starts_with("0.5,"));
}

/// All-pairs shortest distances by Floyd-Warshall.
fn floyd_warshall(n: usize, edges: &[(usize, usize, u32)]) -> Vec<Vec<Option<u64>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b, w) in edges {
        let w = Some(w as u64);
        if d[a][b].is_none_or(|x| Some(x) > w) {
            d[a][b] = w;
            d[b][a] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| c > x + y) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

#[test]
fn routing_matches_floyd_warshall() {
    use rand::Rng;
    let mut rng = crate::seed::rng(7, &[4]);
    for _ in 0..200 {
        let n = 10;
        let mut edges = Vec::new();
        let mut text = String::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.3) {
                    let w: u32 = rng.random_range(1..=20);
                    edges.push((a, b, w));
                    text.push_str(&format!("R{a} R{b} 1000 {w}\n"));
                }
            }
        }
        for r in 0..n {
            text.push_str(&format!("R{r} R{r}\n"));
        }
        let kg = load_topology(text.as_bytes(), TopologyFormat::Edgelist).unwrap().graph;
        let mut tm = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    tm.push(TrafficFlow {
                        flow_id: format!("F{a}_{b}"),
                        src: format!("R{a}"),
                        dst: format!("R{b}"),
                        demand_mbps: 1.0,
                        priority: 1,
                    });
                }
            }
        }
        let s = NetworkState::new(&kg, &TrafficMatrix::new(tm)).unwrap();
        let d = floyd_warshall(n, &edges);
        for (f, route) in s.flows.iter().zip(s.compute_routes()) {
            let a: usize = s.routers[f.src].id.as_str()[1..].parse().unwrap();
            let b: usize = s.routers[f.dst].id.as_str()[1..].parse().unwrap();
            assert_eq!(route.map(|r| r.cost as u64), d[a][b]);
        }
    }
}

/// Parent links, flow demands and the index of the link to cut.
type TreeCase = (Vec<(usize, f64)>, Vec<(usize, usize, f64)>, usize);

fn tree_case() -> impl Strategy<Value = TreeCase> {
    (3usize..9).prop_flat_map(|n| {
        let parents = proptest::collection::vec((0usize..1000, 200.0..1500.0f64), n - 1);
        let demands = proptest::collection::vec((0usize..n, 0usize..n, 50.0..900.0f64), 1..6);
        (parents, demands, 0usize..n - 1)
    })
}

fn tree_graph(parents: &[(usize, f64)]) -> KnowledgeGraph {
    let mut text = String::from("R0 R0\n");
    for (i, &(p, cap)) in parents.iter().enumerate() {
        let child = i + 1;
        text.push_str(&format!("R{} R{child} {cap:.0}\n", p % child));
    }
    load_topology(text.as_bytes(), TopologyFormat::Edgelist).unwrap().graph
}

fn tree_traffic(demands: &[(usize, usize, f64)]) -> TrafficMatrix {
    TrafficMatrix::new(
        demands
            .iter()
            .enumerate()
            .filter(|(_, d)| d.0 != d.1)
            .map(|(i, &(s, d, mbps))| TrafficFlow {
                flow_id: format!("F{i}"),
                src: format!("R{s}"),
                dst: format!("R{d}"),
                demand_mbps: mbps,
                priority: 1 + (i % 3) as u8,
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_determinism((parents, demands, cut) in tree_case(), sev in 0usize..3) {
        let kg = tree_graph(&parents);
        let tm = tree_traffic(&demands);
        let link = kg.topology().links()[cut].id.clone();
        let s = Scenario::new("s", vec![FailureEvent::new(
            EventType::FiberLinkFailure, link, 30.0, Severity::ALL[sev])]);
        let cfg = SimulationConfig { horizon_s: 120.0, ..Default::default() };
        let a = run(&s, &kg, &tm, &cfg).unwrap();
        let b = run(&s, &kg, &tm, &cfg).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        for k in a.samples.iter().chain(&a.trajectory) {
            let rel = (k.delivered_mbps + k.dropped_mbps - k.offered_mbps).abs() / k.offered_mbps.max(1.0);
            prop_assert!(rel <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&k.loss_fraction));
            prop_assert!(k.p95_latency_ms >= k.mean_latency_ms && k.mean_latency_ms >= 0.0);
        }
        for f in a.per_flow.values() {
            prop_assert!((f.delivered_mbps + f.dropped_mbps - f.offered_mbps).abs() <= 1e-9 * f.offered_mbps);
        }
        for e in &a.induced_events {
            let cause = a.all_events().nth(e.cause.unwrap()).unwrap();
            prop_assert!(e.timestamp >= cause.timestamp + cfg.cascade_grace_s - 1e-9);
        }
    }

    /// Every flow crosses the cut link. When some flows bypass it, taking
    /// the link down relieves congestion elsewhere and aggregate loss can
    /// fall below the partial-failure case.
    #[test]
    fn loss_is_monotone_in_fiber_severity(
        caps in proptest::collection::vec(300.0..1500.0f64, 2..7),
        demands in proptest::collection::vec(50.0..600.0f64, 1..4),
        cut in 0usize..6,
    ) {
        let n = caps.len() + 1;
        let text: String = caps.iter().enumerate()
            .map(|(i, c)| format!("R{i} R{} {c:.0}\n", i + 1)).collect();
        let kg = graph(&text);
        let tm = TrafficMatrix::new(demands.iter().enumerate().map(|(i, &d)| TrafficFlow {
            flow_id: format!("F{i}"),
            src: "R0".into(),
            dst: format!("R{}", n - 1),
            demand_mbps: d,
            priority: 1,
        }).collect());
        let link = kg.topology().links()[cut % caps.len()].id.clone();
        let cfg = SimulationConfig { horizon_s: 60.0, ..Default::default() };
        let loss: Vec<f64> = Severity::ALL.iter().map(|&sev| {
            let s = Scenario::new("s", vec![FailureEvent::new(
                EventType::FiberLinkFailure, link.clone(), 10.0, sev)]);
            run(&s, &kg, &tm, &cfg).unwrap().samples.last().unwrap().loss_fraction
        }).collect();
        prop_assert!(loss[2] >= loss[1] && loss[1] >= loss[0], "{:?}", loss);
    }

    #[test]
    fn routes_use_only_up_components((parents, demands, cut) in tree_case()) {
        let kg = tree_graph(&parents);
        let tm = tree_traffic(&demands);
        let mut s = state(&kg, &tm);
        let link = kg.topology().links()[cut].id.clone();
        s.apply_event(&FailureEvent::new(EventType::FiberLinkFailure, link, 1.0, Severity::High),
            &SimulationConfig::default()).unwrap();
        let r = s.compute_routes();
        s.install_all(r, 1.0);
        s.assign_flows(1.0);
        for f in &s.flows {
            if let Some(route) = &f.route {
                prop_assert!(route.links.iter().all(|&l| s.links[l].up));
                prop_assert!(route.routers.iter().all(|&r| s.routers[r].up));
            }
        }
        for l in s.links.iter().filter(|l| l.up) {
            prop_assert!((l.utilization() - l.load_mbps / l.capacity_mbps()).abs() < 1e-12);
        }
    }
}
