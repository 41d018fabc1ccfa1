//! Discrete-event loop.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use log::{debug, warn};

use super::state::{FlowEval, NetworkState};
use super::{FlowOutcome, KpiSample, SimulationConfig, SimulationResult, TrafficMatrix, TwinError};
use crate::kgraph::KnowledgeGraph;
use crate::mitigate::{MitigationAction, MitigationPlan};
use crate::scenario::{cause_depth, EventType, FailureEvent, Scenario, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Event(usize),
    Mitigation,
    Install(Option<usize>),
    Check,
}

impl Item {
    fn priority(self) -> u8 {
        match self {
            Item::Event(_) => 0,
            Item::Mitigation => 1,
            Item::Install(_) => 2,
            Item::Check => 3,
        }
    }
}

struct Queued {
    t: f64,
    seq: u64,
    item: Item,
}

impl Queued {
    fn key(&self) -> (f64, u8, u64) {
        (self.t, self.item.priority(), self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops the earliest item.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

struct Engine<'a> {
    cfg: &'a SimulationConfig,
    state: NetworkState,
    baseline_evals: Vec<FlowEval>,
    queue: BinaryHeap<Queued>,
    seq: u64,
    primary: usize,
    events: Vec<FailureEvent>,
    applied: Vec<usize>,
    undone: BTreeSet<usize>,
    convergence: BTreeMap<usize, f64>,
    trajectory: Vec<KpiSample>,
    warnings: Vec<String>,
}

impl Engine<'_> {
    fn push(&mut self, t: f64, item: Item) {
        if t <= self.cfg.horizon_s {
            self.seq += 1;
            self.queue.push(Queued { t, seq: self.seq, item });
        }
    }

    fn kpis(&self, now: f64) -> KpiSample {
        self.state.kpis(now, self.cfg, Some(&self.baseline_evals))
    }

    fn record(&mut self, now: f64) {
        let cur = self.kpis(now);
        let last = self.trajectory.last().expect("trajectory starts with baseline");
        if !cur.same_kpis(last) {
            if last.t == now {
                *self.trajectory.last_mut().expect("non-empty") = cur;
            } else {
                self.trajectory.push(cur);
            }
        }
    }

    /// Recomputes routes after a failure. Flows whose path changed are
    /// blackholed until convergence completes.
    fn reroute(&mut self, now: f64, cause: Option<usize>) {
        let routes = self.state.compute_routes();
        if let Some(hops) = self.state.max_changed_hops(&routes) {
            let delay_ms = self.cfg.detect_delay_ms + self.cfg.per_hop_update_ms * hops as f64;
            let at = now + delay_ms / 1000.0;
            self.state.install_routes(routes, at);
            if let Some(c) = cause.filter(|&c| c < self.primary) {
                self.convergence.insert(c, delay_ms);
            }
            self.push(at, Item::Install(cause));
        }
        self.settle(now, cause);
    }

    fn settle(&mut self, now: f64, cause: Option<usize>) {
        self.state.assign_flows(now);
        for d in self.state.update_overload(now, cause, self.cfg) {
            self.push(d, Item::Check);
        }
    }

    fn apply(&mut self, idx: usize, now: f64) {
        let ev = self.events[idx].clone();
        match self.state.apply_event(&ev, self.cfg) {
            Ok(()) => {
                self.applied.push(idx);
                debug!("t={now}: applied {} on {}", ev.event_type, ev.target);
                self.reroute(now, Some(idx));
            }
            Err(why) => {
                warn!("t={now}: event {idx} has no effect: {why}");
                self.warnings
                    .push(format!("event {idx} at t={now} has no effect: {why}"));
            }
        }
    }

    fn check(&mut self, now: f64) {
        for trip in self.state.cascade_check(now, self.cfg) {
            let ev = FailureEvent::new(EventType::CascadingTrip, trip.target, now, Severity::High)
                .caused_by(trip.cause)
                .with_param("utilization", trip.utilization);
            let idx = self.events.len();
            self.events.push(ev);
            self.apply(idx, now);
        }
    }

    fn mitigate(&mut self, plan: &MitigationPlan, now: f64) {
        if plan.actions.is_empty() {
            return;
        }
        let mut rolled_back = false;
        for action in &plan.actions {
            match action {
                MitigationAction::Reroute { avoid } => {
                    for id in self.state.avoid(avoid) {
                        self.warnings.push(format!("reroute ignores unknown component `{id}`"));
                    }
                }
                MitigationAction::CapacityBoost { link, factor } => {
                    if !self.state.boost(link.as_str(), *factor) {
                        self.warnings
                            .push(format!("capacity boost ignores unknown link `{link}`"));
                    }
                }
                MitigationAction::LoadShed { keep_max_priority } => self.state.shed(*keep_max_priority),
                MitigationAction::Rollback { events } => {
                    self.undone.extend(events.iter().copied());
                    rolled_back = true;
                }
            }
        }
        if rolled_back {
            for (i, e) in self.events.iter().enumerate() {
                if e.cause.is_some_and(|c| self.undone.contains(&c)) {
                    self.undone.insert(i);
                }
            }
            self.state.reset_dynamic();
            let keep: Vec<usize> = self
                .applied
                .iter()
                .copied()
                .filter(|i| !self.undone.contains(i))
                .collect();
            for &i in &keep {
                let ev = self.events[i].clone();
                if self.state.apply_event(&ev, self.cfg).is_ok() && ev.event_type == EventType::CascadingTrip {
                    self.state.mark_tripped(ev.target.as_str());
                }
            }
            self.applied = keep;
        }
        let routes = self.state.compute_routes();
        self.state.install_all(routes, now);
        if rolled_back {
            self.state.clear_episodes();
        }
        let cause = self.applied.last().copied();
        self.settle(now, cause);
    }
}

/// Simulates a scenario over the traffic matrix.
pub fn run(
    scenario: &Scenario,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    cfg: &SimulationConfig,
) -> Result<SimulationResult, TwinError> {
    run_with_plan(scenario, kg, traffic, cfg, None)
}

/// Simulates the intact network.
pub fn run_baseline(
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    cfg: &SimulationConfig,
) -> Result<SimulationResult, TwinError> {
    run(&Scenario::new("baseline", Vec::new()), kg, traffic, cfg)
}

/// Simulates a scenario with a mitigation plan applied at its trigger time.
/// Mitigation actions take effect at once; a rollback also cancels the
/// rolled-back events' induced descendants and any of them still pending.
pub fn run_with_plan(
    scenario: &Scenario,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    cfg: &SimulationConfig,
    plan: Option<&MitigationPlan>,
) -> Result<SimulationResult, TwinError> {
    cfg.check()?;
    let mut state = NetworkState::new(kg, traffic)?;
    let routes = state.compute_routes();
    state.install_all(routes, 0.0);
    state.assign_flows(0.0);
    let baseline_evals = state.flow_evals(0.0, cfg);
    let baseline = state.kpis(0.0, cfg, Some(&baseline_evals));

    let mut eng = Engine {
        cfg,
        state,
        baseline_evals,
        queue: BinaryHeap::new(),
        seq: 0,
        primary: scenario.events.len(),
        events: scenario.events.clone(),
        applied: Vec::new(),
        undone: BTreeSet::new(),
        convergence: BTreeMap::new(),
        trajectory: vec![baseline.clone()],
        warnings: Vec::new(),
    };
    eng.settle(0.0, None);
    for (i, e) in scenario.events.iter().enumerate() {
        if e.timestamp.is_finite() && e.timestamp >= 0.0 {
            eng.push(e.timestamp, Item::Event(i));
        } else {
            eng.warnings.push(format!("event {i} has an invalid timestamp"));
        }
    }
    if let Some(p) = plan {
        eng.push(p.trigger_s.max(0.0), Item::Mitigation);
    }

    let horizon = cfg.horizon_s;
    let n_samples = (horizon / cfg.sample_interval_s + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n_samples);
    let mut k = 0;
    loop {
        let sample_t = (k < n_samples).then_some(k as f64 * cfg.sample_interval_s);
        let next = eng.queue.peek().map(|q| q.t);
        match (next, sample_t) {
            (Some(t), s) if s.is_none_or(|s| t <= s) => {
                let q = eng.queue.pop().expect("peeked");
                match q.item {
                    Item::Event(i) => {
                        if !eng.undone.contains(&i) {
                            eng.apply(i, t);
                        }
                    }
                    Item::Mitigation => eng.mitigate(plan.expect("mitigation item needs a plan"), t),
                    Item::Install(cause) => eng.settle(t, cause),
                    Item::Check => eng.check(t),
                }
                eng.record(t);
            }
            (_, Some(s)) => {
                let last = eng.trajectory.last().expect("non-empty");
                samples.push(KpiSample { t: s, ..last.clone() });
                k += 1;
            }
            (_, None) => break,
        }
    }

    let evals = eng.state.flow_evals(horizon, cfg);
    let mut paths = eng.state.routing_map();
    let per_flow = eng
        .state
        .flows
        .iter()
        .zip(&evals)
        .map(|(f, ev)| {
            let offered = f.demand_mbps;
            let delivered = if f.shed { 0.0 } else { offered * (1.0 - ev.loss) };
            let path = paths.remove(&f.id).unwrap_or_default();
            (
                f.id.clone(),
                FlowOutcome {
                    offered_mbps: offered,
                    delivered_mbps: delivered,
                    dropped_mbps: offered - delivered,
                    path,
                },
            )
        })
        .collect();
    let link_utilization = eng
        .state
        .links
        .iter()
        .filter(|l| l.up)
        .map(|l| (l.id.clone(), l.utilization()))
        .collect();
    let induced_events = eng.events.split_off(eng.primary);
    let all: Vec<FailureEvent> = eng.events.iter().chain(&induced_events).cloned().collect();
    Ok(SimulationResult {
        scenario_id: scenario.id.clone(),
        seed: cfg.seed,
        horizon_s: horizon,
        total_routers: eng.state.routers.len(),
        baseline,
        samples,
        trajectory: eng.trajectory,
        cascade_depth: cause_depth(&all),
        events: eng.events,
        induced_events,
        reroute_convergence: eng.convergence,
        per_flow,
        link_utilization,
        down: eng.state.down_components(),
        warnings: eng.warnings,
    })
}
