//! Mutable network state: component status, routing, flow assignment and KPIs.

use std::collections::{BTreeMap, BTreeSet};

use super::{link_loss, queueing_multiplier, KpiSample, SimulationConfig, TrafficMatrix, TwinError};
use crate::kgraph::{ComponentId, ComponentKind, KnowledgeGraph, Route, Topology};
use crate::scenario::{EventType, FailureEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub id: ComponentId,
    pub up: bool,
    pub base_capacity_mbps: f64,
    /// Capacity fraction left by partial fiber failures.
    pub degrade: f64,
    /// Capacity multiplier applied by mitigation.
    pub boost: f64,
    pub prop_latency_ms: f64,
    pub load_mbps: f64,
}

impl LinkState {
    pub fn capacity_mbps(&self) -> f64 {
        self.base_capacity_mbps * self.degrade * self.boost
    }

    pub fn utilization(&self) -> f64 {
        let cap = self.capacity_mbps();
        if self.up && cap > 0.0 {
            self.load_mbps / cap
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    pub id: ComponentId,
    pub up: bool,
    pub cpu_units: f64,
    /// Load added by overload events, in cpu units.
    pub extra_cpu: f64,
    /// Forwarded traffic, in Mbps.
    pub traffic_mbps: f64,
}

impl RouterState {
    pub fn cpu_load(&self) -> f64 {
        self.traffic_mbps / 1000.0 + self.extra_cpu
    }

    /// Per-hop latency factor: `1 + (load - units) / units` when overloaded.
    pub fn latency_factor(&self) -> f64 {
        if self.cpu_units > 0.0 {
            1.0 + ((self.cpu_load() - self.cpu_units) / self.cpu_units).max(0.0)
        } else {
            1.0
        }
    }

    pub fn cpu_utilization(&self) -> f64 {
        if self.cpu_units > 0.0 {
            self.cpu_load() / self.cpu_units
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub id: ComponentId,
    pub src: usize,
    pub dst: usize,
    pub base_demand_mbps: f64,
    pub demand_mbps: f64,
    pub priority: u8,
    pub shed: bool,
    pub route: Option<Route>,
    /// The route carries traffic from this time on; before it the flow is
    /// blackholed while routing converges.
    pub active_from: f64,
}

impl FlowState {
    pub fn active(&self, now: f64) -> bool {
        !self.shed && self.route.is_some() && now >= self.active_from
    }
}

/// Per-flow KPI contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEval {
    pub loss: f64,
    /// End-to-end latency when the flow delivers traffic.
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(super) enum Elem {
    Link(usize),
    Router(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Episode {
    since: f64,
    cause: Option<usize>,
}

/// Overload trip produced by [`NetworkState::cascade_check`].
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Trip {
    pub target: ComponentId,
    pub cause: usize,
    pub utilization: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    topo: Topology,
    pub links: Vec<LinkState>,
    pub routers: Vec<RouterState>,
    pub flows: Vec<FlowState>,
    flow_pos: BTreeMap<ComponentId, usize>,
    avoid_links: Vec<bool>,
    avoid_routers: Vec<bool>,
    over: BTreeMap<Elem, Episode>,
    tripped: BTreeSet<Elem>,
}

impl NetworkState {
    pub fn new(kg: &KnowledgeGraph, traffic: &TrafficMatrix) -> Result<Self, TwinError> {
        traffic.check_against(kg)?;
        let topo = kg.topology().clone();
        let links = topo
            .links()
            .iter()
            .map(|l| LinkState {
                id: l.id.clone(),
                up: true,
                base_capacity_mbps: l.capacity_mbps,
                degrade: 1.0,
                boost: 1.0,
                prop_latency_ms: l.prop_latency_ms,
                load_mbps: 0.0,
            })
            .collect::<Vec<_>>();
        let routers = topo
            .routers()
            .iter()
            .map(|r| RouterState {
                id: r.clone(),
                up: true,
                cpu_units: kg.component(r.as_str()).map_or(0.0, |c| c.cpu_units()),
                extra_cpu: 0.0,
                traffic_mbps: 0.0,
            })
            .collect::<Vec<_>>();
        let mut flows = Vec::with_capacity(traffic.flows.len());
        for f in &traffic.flows {
            let id = ComponentId::new(f.flow_id.as_str()).map_err(|e| TwinError::Integrity(e.to_string()))?;
            let idx = |r: &str| {
                topo.router_index(r)
                    .ok_or_else(|| TwinError::Integrity(format!("router `{r}` has no topology entry")))
            };
            flows.push(FlowState {
                id,
                src: idx(&f.src)?,
                dst: idx(&f.dst)?,
                base_demand_mbps: f.demand_mbps,
                demand_mbps: f.demand_mbps,
                priority: f.priority,
                shed: false,
                route: None,
                active_from: 0.0,
            });
        }
        flows.sort_by(|a, b| a.id.cmp(&b.id));
        let flow_pos = flows.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        Ok(NetworkState {
            avoid_links: vec![false; links.len()],
            avoid_routers: vec![false; routers.len()],
            topo,
            links,
            routers,
            flows,
            flow_pos,
            over: BTreeMap::new(),
            tripped: BTreeSet::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Latency-shortest path per flow over up components, avoiding
    /// components marked by a reroute mitigation when an alternative exists.
    pub fn compute_routes(&self) -> Vec<Option<Route>> {
        let mut by_src: BTreeMap<usize, Vec<Option<Route>>> = BTreeMap::new();
        let mut relaxed: BTreeMap<usize, Vec<Option<Route>>> = BTreeMap::new();
        let avoiding = self.avoid_links.iter().chain(&self.avoid_routers).any(|&a| a);
        self.flows
            .iter()
            .map(|f| {
                let strict = by_src.entry(f.src).or_insert_with(|| {
                    self.topo.shortest_paths(
                        f.src,
                        |l| self.links[l].up && !self.avoid_links[l],
                        |r| self.routers[r].up && !self.avoid_routers[r],
                    )
                });
                if let Some(r) = &strict[f.dst] {
                    return Some(r.clone());
                }
                if !avoiding {
                    return None;
                }
                let loose = relaxed.entry(f.src).or_insert_with(|| {
                    self.topo
                        .shortest_paths(f.src, |l| self.links[l].up, |r| self.routers[r].up)
                });
                loose[f.dst].clone()
            })
            .collect()
    }

    /// Current routing as flow id -> link ids; unroutable flows map to an
    /// empty path.
    pub fn routing_map(&self) -> BTreeMap<ComponentId, Vec<ComponentId>> {
        self.flows
            .iter()
            .map(|f| {
                let path = f
                    .route
                    .as_ref()
                    .map(|r| r.links.iter().map(|&l| self.links[l].id.clone()).collect())
                    .unwrap_or_default();
                (f.id.clone(), path)
            })
            .collect()
    }

    /// Hop count of the longest new path among flows whose route would
    /// change, or `None` if no route changes.
    pub fn max_changed_hops(&self, routes: &[Option<Route>]) -> Option<usize> {
        let mut out = None;
        for (f, new) in self.flows.iter().zip(routes) {
            if f.route.as_ref().map(|r| &r.links) != new.as_ref().map(|r| &r.links) {
                let hops = new.as_ref().map_or(0, |r| r.links.len());
                out = Some(out.map_or(hops, |h: usize| h.max(hops)));
            }
        }
        out
    }

    /// Installs new routes; flows whose path changes carry traffic again
    /// from `active_from`.
    pub fn install_routes(&mut self, routes: Vec<Option<Route>>, active_from: f64) {
        for (f, new) in self.flows.iter_mut().zip(routes) {
            if f.route.as_ref().map(|r| &r.links) != new.as_ref().map(|r| &r.links) {
                f.route = new;
                f.active_from = active_from;
            }
        }
    }

    /// Installs routes and activates every flow at `now`.
    pub fn install_all(&mut self, routes: Vec<Option<Route>>, now: f64) {
        for (f, new) in self.flows.iter_mut().zip(routes) {
            f.route = new;
            f.active_from = f.active_from.min(now);
        }
    }

    /// Recomputes link loads and router traffic for the flows active at `now`.
    pub fn assign_flows(&mut self, now: f64) {
        for l in &mut self.links {
            l.load_mbps = 0.0;
        }
        for r in &mut self.routers {
            r.traffic_mbps = 0.0;
        }
        for f in &self.flows {
            if !f.active(now) {
                continue;
            }
            let route = f.route.as_ref().expect("active flow has a route");
            for &l in &route.links {
                self.links[l].load_mbps += f.demand_mbps;
            }
            for &r in &route.routers {
                self.routers[r].traffic_mbps += f.demand_mbps;
            }
        }
    }

    /// Applies an event's effect. Returns an explanation when the event has
    /// nothing to act on.
    pub fn apply_event(&mut self, ev: &FailureEvent, cfg: &SimulationConfig) -> Result<(), String> {
        let target = ev.target.as_str();
        let link = self.topo.link_index(target);
        let router = self.topo.router_index(target);
        match ev.event_type {
            EventType::FiberLinkFailure => {
                let l = link.ok_or_else(|| format!("`{target}` is not a routable link"))?;
                self.ensure_up(Elem::Link(l))?;
                let f = cfg.fiber_capacity_factor.get(ev.severity);
                if f <= 0.0 {
                    self.take_down(Elem::Link(l));
                } else {
                    self.links[l].degrade *= f;
                }
            }
            EventType::NodeFailure => {
                let r = router.ok_or_else(|| format!("`{target}` is not a router"))?;
                self.ensure_up(Elem::Router(r))?;
                self.take_down(Elem::Router(r));
            }
            EventType::CascadingTrip => {
                let e = match (link, router) {
                    (Some(l), _) => Elem::Link(l),
                    (_, Some(r)) => Elem::Router(r),
                    _ => return Err(format!("`{target}` is neither a link nor a router")),
                };
                self.ensure_up(e)?;
                self.take_down(e);
            }
            EventType::RouterOverload => {
                let r = router.ok_or_else(|| format!("`{target}` is not a router"))?;
                self.ensure_up(Elem::Router(r))?;
                let units = self.routers[r].cpu_units;
                let extra = ev
                    .param_f64("cpu_load")
                    .unwrap_or_else(|| cfg.overload_cpu_factor.get(ev.severity) * units);
                self.routers[r].extra_cpu += extra.max(0.0);
            }
            EventType::TrafficSpike => {
                let mult = ev
                    .param_f64("spike_multiplier")
                    .filter(|m| m.is_finite() && *m > 0.0)
                    .unwrap_or_else(|| cfg.spike_multiplier.get(ev.severity));
                if let Some(&i) = self.flow_pos.get(target) {
                    self.flows[i].demand_mbps *= mult;
                } else if let Some(r) = router {
                    let mut any = false;
                    for f in self.flows.iter_mut().filter(|f| f.dst == r) {
                        f.demand_mbps *= mult;
                        any = true;
                    }
                    if !any {
                        return Err(format!("no flow terminates at router `{target}`"));
                    }
                } else {
                    return Err(format!("`{target}` is not a flow or router"));
                }
            }
        }
        Ok(())
    }

    fn ensure_up(&self, e: Elem) -> Result<(), String> {
        let (up, id) = match e {
            Elem::Link(l) => (self.links[l].up, &self.links[l].id),
            Elem::Router(r) => (self.routers[r].up, &self.routers[r].id),
        };
        if up {
            Ok(())
        } else {
            Err(format!("`{id}` is already down"))
        }
    }

    /// Takes a component down; a router takes its incident links with it.
    fn take_down(&mut self, e: Elem) {
        match e {
            Elem::Link(l) => self.links[l].up = false,
            Elem::Router(r) => {
                self.routers[r].up = false;
                let incident: Vec<usize> = self.topo.neighbors(r).iter().map(|&(_, l)| l).collect();
                for l in incident {
                    self.links[l].up = false;
                    self.over.remove(&Elem::Link(l));
                }
            }
        }
        self.over.remove(&e);
    }

    /// Marks components a reroute should steer around. Returns ids that are
    /// not routers or links.
    pub fn avoid(&mut self, ids: &[ComponentId]) -> Vec<ComponentId> {
        let mut unknown = Vec::new();
        for id in ids {
            if let Some(l) = self.topo.link_index(id.as_str()) {
                self.avoid_links[l] = true;
            } else if let Some(r) = self.topo.router_index(id.as_str()) {
                self.avoid_routers[r] = true;
            } else {
                unknown.push(id.clone());
            }
        }
        unknown
    }

    pub fn boost(&mut self, link: &str, factor: f64) -> bool {
        match self.topo.link_index(link) {
            Some(l) => {
                self.links[l].boost *= factor;
                true
            }
            None => false,
        }
    }

    /// Sheds every flow whose priority number exceeds `keep_max_priority`.
    pub fn shed(&mut self, keep_max_priority: u8) {
        for f in &mut self.flows {
            if f.priority > keep_max_priority {
                f.shed = true;
            }
        }
    }

    /// Restores component status and demands to their initial values while
    /// keeping mitigation state (boosts, sheds, avoidance).
    pub fn reset_dynamic(&mut self) {
        for l in &mut self.links {
            l.up = true;
            l.degrade = 1.0;
        }
        for r in &mut self.routers {
            r.up = true;
            r.extra_cpu = 0.0;
        }
        for f in &mut self.flows {
            f.demand_mbps = f.base_demand_mbps;
        }
        self.over.clear();
        self.tripped.clear();
    }

    /// Records a reapplied trip so the component cannot trip again.
    pub(super) fn mark_tripped(&mut self, target: &str) {
        if let Some(l) = self.topo.link_index(target) {
            self.tripped.insert(Elem::Link(l));
        } else if let Some(r) = self.topo.router_index(target) {
            self.tripped.insert(Elem::Router(r));
        }
    }

    pub(super) fn clear_episodes(&mut self) {
        self.over.clear();
    }

    /// Opens or closes over-threshold episodes after a state change at `now`.
    /// Newly opened episodes are attributed to `cause`; returns the trip
    /// deadlines of those that can trip.
    pub(super) fn update_overload(&mut self, now: f64, cause: Option<usize>, cfg: &SimulationConfig) -> Vec<f64> {
        let mut deadlines = Vec::new();
        let threshold = cfg.cascade_threshold;
        let mut status: Vec<(Elem, bool)> = self
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.up)
            .map(|(i, l)| (Elem::Link(i), l.utilization() >= threshold))
            .collect();
        if cfg.router_trip {
            status.extend(
                self.routers
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.up)
                    .map(|(i, r)| (Elem::Router(i), r.cpu_utilization() >= threshold)),
            );
        }
        for (e, over) in status {
            if self.tripped.contains(&e) {
                continue;
            }
            if over {
                if let std::collections::btree_map::Entry::Vacant(slot) = self.over.entry(e) {
                    slot.insert(Episode { since: now, cause });
                    if cause.is_some() {
                        deadlines.push(now + cfg.cascade_grace_s);
                    }
                }
            } else {
                self.over.remove(&e);
            }
        }
        deadlines
    }

    /// Trips every component whose attributed over-threshold episode has
    /// lasted the grace period by `now`.
    pub(super) fn cascade_check(&mut self, now: f64, cfg: &SimulationConfig) -> Vec<Trip> {
        let due: Vec<(Elem, usize)> = self
            .over
            .iter()
            .filter_map(|(&e, ep)| {
                let c = ep.cause?;
                (ep.since + cfg.cascade_grace_s <= now + 1e-9).then_some((e, c))
            })
            .collect();
        let mut trips = Vec::new();
        for (e, cause) in due {
            self.over.remove(&e);
            self.tripped.insert(e);
            let (target, utilization) = match e {
                Elem::Link(l) => (self.links[l].id.clone(), self.links[l].utilization()),
                Elem::Router(r) => (self.routers[r].id.clone(), self.routers[r].cpu_utilization()),
            };
            trips.push(Trip {
                target,
                cause,
                utilization,
            });
        }
        trips
    }

    fn flow_eval(&self, f: &FlowState, now: f64, cap: f64) -> FlowEval {
        if !f.active(now) {
            return FlowEval {
                loss: 1.0,
                latency_ms: None,
            };
        }
        let route = f.route.as_ref().expect("active flow has a route");
        let mut pass = 1.0;
        let mut latency = 0.0;
        for (hop, &l) in route.links.iter().enumerate() {
            let link = &self.links[l];
            let u = link.utilization();
            pass *= 1.0 - link_loss(u);
            let router = &self.routers[route.routers[hop]];
            latency += link.prop_latency_ms * queueing_multiplier(u, cap) * router.latency_factor();
        }
        let loss = (1.0 - pass).clamp(0.0, 1.0);
        FlowEval {
            loss,
            latency_ms: (loss < 1.0).then_some(latency),
        }
    }

    /// Per-flow KPI contributions at `now`, in flow id order.
    pub fn flow_evals(&self, now: f64, cfg: &SimulationConfig) -> Vec<FlowEval> {
        self.flows
            .iter()
            .map(|f| self.flow_eval(f, now, cfg.latency_cap))
            .collect()
    }

    /// Network KPIs at `now`. `baseline` holds the intact network's per-flow
    /// evaluations; flows are impacted when they lose more than 1% beyond
    /// their baseline loss or their latency grows by 20% or more.
    pub fn kpis(&self, now: f64, cfg: &SimulationConfig, baseline: Option<&[FlowEval]>) -> KpiSample {
        let evals = self.flow_evals(now, cfg);
        let mut offered = 0.0;
        let mut delivered = 0.0;
        let mut latencies = Vec::new();
        let mut impacted = BTreeSet::new();
        for (i, (f, ev)) in self.flows.iter().zip(&evals).enumerate() {
            if f.shed {
                continue;
            }
            offered += f.demand_mbps;
            delivered += f.demand_mbps * (1.0 - ev.loss);
            if let Some(l) = ev.latency_ms {
                latencies.push(l);
            }
            let base = baseline.map(|b| b[i]);
            let base_loss = base.map_or(0.0, |b| b.loss);
            let slower = match (ev.latency_ms, base.and_then(|b| b.latency_ms)) {
                (Some(now_l), Some(base_l)) => base_l > 0.0 && now_l >= 1.2 * base_l,
                _ => false,
            };
            if ev.loss > base_loss + 0.01 || slower {
                impacted.insert(f.src);
                impacted.insert(f.dst);
            }
        }
        let (mean_lat, p95) = if latencies.is_empty() {
            (0.0, 0.0)
        } else {
            latencies.sort_by(f64::total_cmp);
            let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
            let rank = ((0.95 * latencies.len() as f64).ceil() as usize).clamp(1, latencies.len());
            (mean, latencies[rank - 1].max(mean))
        };
        // Down links count as idle so that failing an unused link leaves the
        // mean unchanged.
        let utils: Vec<f64> = self.links.iter().map(|l| l.utilization()).collect();
        let max_u = utils.iter().copied().fold(0.0, f64::max);
        let mean_u = if utils.is_empty() {
            0.0
        } else {
            utils.iter().sum::<f64>() / utils.len() as f64
        };
        let dropped = (offered - delivered).max(0.0);
        KpiSample {
            t: now,
            mean_latency_ms: mean_lat,
            p95_latency_ms: p95,
            loss_fraction: if offered > 0.0 { dropped / offered } else { 0.0 },
            max_utilization: max_u,
            mean_utilization: mean_u,
            impacted_nodes: impacted.len(),
            offered_mbps: offered,
            delivered_mbps: delivered,
            dropped_mbps: dropped,
        }
    }

    pub fn down_components(&self) -> Vec<ComponentId> {
        let mut out: Vec<ComponentId> = self
            .links
            .iter()
            .filter(|l| !l.up)
            .map(|l| l.id.clone())
            .chain(self.routers.iter().filter(|r| !r.up).map(|r| r.id.clone()))
            .collect();
        out.sort();
        out
    }

    pub fn kind_of_target(&self, id: &str) -> Option<ComponentKind> {
        if self.topo.link_index(id).is_some() {
            Some(ComponentKind::Link)
        } else if self.topo.router_index(id).is_some() {
            Some(ComponentKind::Router)
        } else if self.flow_pos.contains_key(id) {
            Some(ComponentKind::Flow)
        } else {
            None
        }
    }
}
