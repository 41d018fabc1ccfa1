//! Dependency knowledge graph.
//!
//! A [`KnowledgeGraph`] holds typed components (routers, links, flows,
//! services and shared resources) and directed dependency edges between
//! them. It is immutable once built; every constructor checks referential
//! integrity and the relation typing rules, then builds a [`Topology`]
//! index over the router/link layer used for routing and reachability.

mod ingest;
mod query;
mod topology;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    load_topology, parse_service_spec, FlowSpec, Ingest, IngestWarning, ResourceSpec, ServiceDef, ServiceSpec,
    TopologyFormat,
};
pub use topology::{Route, TopoLink, Topology};

/// Default capacity assigned to links whose source omits one.
pub const DEFAULT_CAPACITY_MBPS: f64 = 1000.0;
/// Default propagation latency assigned to links whose source omits one.
pub const DEFAULT_LATENCY_MS: f64 = 1.0;
/// Default router processing budget, in units of 1000 Mbps of forwarded traffic.
pub const DEFAULT_CPU_UNITS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("unknown component `{0}`")]
    Lookup(String),
    #[error("`{id}` is a {actual}, expected {expected}")]
    Kind {
        id: String,
        expected: &'static str,
        actual: ComponentKind,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl KgError {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        KgError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

/// Identifier of a component. Link ids use the canonical `"A-B"` form with
/// endpoint names sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(String);

impl ComponentId {
    /// Builds an id from a token. Tokens must be non-empty and free of
    /// whitespace.
    pub fn new(raw: impl Into<String>) -> Result<Self, KgError> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err(KgError::Integrity("component id must not be empty".into()));
        }
        if raw.chars().any(char::is_whitespace) {
            return Err(KgError::Integrity(format!("component id `{raw}` contains whitespace")));
        }
        Ok(ComponentId(raw))
    }

    /// Canonical link id for an endpoint pair; `link(a, b) == link(b, a)`.
    pub fn link(a: &str, b: &str) -> Self {
        if a <= b {
            ComponentId(format!("{a}-{b}"))
        } else {
            ComponentId(format!("{b}-{a}"))
        }
    }

    /// Normalizes a target token: `"C-B"` becomes `"B-C"`. Tokens that do
    /// not look like a link (not exactly one `-` with non-empty sides) are
    /// returned unchanged.
    pub fn canonical(raw: &str) -> Self {
        match split_link(raw) {
            Some((a, b)) => ComponentId::link(a, b),
            None => ComponentId(raw.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Endpoint names if this id has link shape.
    pub fn link_endpoints(&self) -> Option<(&str, &str)> {
        split_link(&self.0)
    }
}

fn split_link(raw: &str) -> Option<(&str, &str)> {
    let (a, b) = raw.split_once('-')?;
    if a.is_empty() || b.is_empty() || b.contains('-') {
        return None;
    }
    Some((a, b))
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ComponentId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for ComponentId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Router,
    Link,
    Service,
    Flow,
    Resource,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ComponentKind::Router => "router",
            ComponentKind::Link => "link",
            ComponentKind::Service => "service",
            ComponentKind::Flow => "flow",
            ComponentKind::Resource => "resource",
        };
        f.write_str(s)
    }
}

/// Optional per-kind attributes. Which fields are meaningful depends on the
/// component kind; absent fields are omitted from the serialized form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attrs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_mbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prop_latency_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_units: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src: Option<ComponentId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dst: Option<ComponentId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demand_mbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub kind: ComponentKind,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Component {
    pub fn router(id: ComponentId) -> Self {
        Component {
            id,
            kind: ComponentKind::Router,
            attrs: Attrs {
                cpu_units: Some(DEFAULT_CPU_UNITS),
                ..Attrs::default()
            },
        }
    }

    pub fn link(a: &str, b: &str, capacity_mbps: f64, prop_latency_ms: f64) -> Self {
        Component {
            id: ComponentId::link(a, b),
            kind: ComponentKind::Link,
            attrs: Attrs {
                capacity_mbps: Some(capacity_mbps),
                prop_latency_ms: Some(prop_latency_ms),
                ..Attrs::default()
            },
        }
    }

    pub fn capacity_mbps(&self) -> f64 {
        self.attrs.capacity_mbps.unwrap_or(DEFAULT_CAPACITY_MBPS)
    }

    pub fn prop_latency_ms(&self) -> f64 {
        self.attrs.prop_latency_ms.unwrap_or(DEFAULT_LATENCY_MS)
    }

    pub fn cpu_units(&self) -> f64 {
        self.attrs.cpu_units.unwrap_or(DEFAULT_CPU_UNITS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    ConnectsTo,
    RoutesOver,
    DependsOn,
    SharesResource,
    BacksUp,
}

/// Directed dependency. `ConnectsTo` edges run router → link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub src: ComponentId,
    pub dst: ComponentId,
    pub relation: Relation,
}

impl DependencyEdge {
    pub fn new(src: ComponentId, dst: ComponentId, relation: Relation) -> Self {
        DependencyEdge { src, dst, relation }
    }
}

/// Free-form past-failure annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub event_type: String,
    pub target: String,
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<String>,
}

/// Parses a newline-delimited JSON incident log. Blank lines are skipped.
pub fn parse_incident_log(bytes: &[u8]) -> Result<Vec<IncidentRecord>, KgError> {
    let text = std::str::from_utf8(bytes).map_err(|e| KgError::parse("incident log", format!("invalid UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: IncidentRecord = serde_json::from_str(line)
            .map_err(|e| KgError::parse(format!("incident log line {}", n + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Serialized form: sorted component and edge arrays.
#[derive(Debug, Serialize, Deserialize)]
struct CanonicalGraph {
    components: Vec<Component>,
    edges: Vec<DependencyEdge>,
    #[serde(default)]
    incidents: Vec<IncidentRecord>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    components: BTreeMap<ComponentId, Component>,
    edges: BTreeSet<DependencyEdge>,
    incidents: Vec<IncidentRecord>,
    /// Incoming edges per component, for reverse traversal.
    incoming: BTreeMap<ComponentId, Vec<DependencyEdge>>,
    outgoing: BTreeMap<ComponentId, Vec<DependencyEdge>>,
    topology: Topology,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.edges == other.edges && self.incidents == other.incidents
    }
}

impl KnowledgeGraph {
    /// An empty graph.
    pub fn empty() -> Self {
        Self::from_parts(Vec::new(), Vec::new(), Vec::new()).expect("empty graph is valid")
    }

    /// Builds a graph, checking id uniqueness, referential integrity,
    /// relation typing and per-kind attribute constraints.
    pub fn from_parts(
        components: Vec<Component>,
        edges: Vec<DependencyEdge>,
        incidents: Vec<IncidentRecord>,
    ) -> Result<Self, KgError> {
        let mut map = BTreeMap::new();
        for c in components {
            check_attrs(&c)?;
            let id = c.id.clone();
            if map.insert(id.clone(), c).is_some() {
                return Err(KgError::Integrity(format!("duplicate component id `{id}`")));
            }
        }
        for c in map.values() {
            if c.kind == ComponentKind::Flow {
                for end in [&c.attrs.src, &c.attrs.dst].into_iter().flatten() {
                    match map.get(end) {
                        Some(r) if r.kind == ComponentKind::Router => {}
                        Some(r) => {
                            return Err(KgError::Integrity(format!(
                                "flow `{}` endpoint `{end}` is a {}",
                                c.id, r.kind
                            )))
                        }
                        None => {
                            return Err(KgError::Integrity(format!(
                                "flow `{}` references unknown router `{end}`",
                                c.id
                            )))
                        }
                    }
                }
            }
        }
        let mut edge_set = BTreeSet::new();
        for e in edges {
            let src = map
                .get(&e.src)
                .ok_or_else(|| KgError::Integrity(format!("edge source `{}` does not exist", e.src)))?;
            let dst = map
                .get(&e.dst)
                .ok_or_else(|| KgError::Integrity(format!("edge target `{}` does not exist", e.dst)))?;
            check_relation(src, dst, e.relation)?;
            edge_set.insert(e);
        }

        // Link endpoints come from ConnectsTo edges and must agree with the id.
        let mut ends: BTreeMap<&ComponentId, Vec<&ComponentId>> = BTreeMap::new();
        for e in edge_set.iter().filter(|e| e.relation == Relation::ConnectsTo) {
            ends.entry(&e.dst).or_default().push(&e.src);
        }
        for (link, routers) in &ends {
            if routers.len() > 2 {
                return Err(KgError::Integrity(format!(
                    "link `{link}` has {} endpoints",
                    routers.len()
                )));
            }
            if routers.len() == 2 {
                let expect = ComponentId::link(routers[0].as_str(), routers[1].as_str());
                if &&expect != link {
                    return Err(KgError::Integrity(format!(
                        "link `{link}` connects {} and {}; canonical id is `{expect}`",
                        routers[0], routers[1]
                    )));
                }
            }
        }

        let mut incoming: BTreeMap<ComponentId, Vec<DependencyEdge>> = BTreeMap::new();
        let mut outgoing: BTreeMap<ComponentId, Vec<DependencyEdge>> = BTreeMap::new();
        for e in &edge_set {
            incoming.entry(e.dst.clone()).or_default().push(e.clone());
            outgoing.entry(e.src.clone()).or_default().push(e.clone());
        }
        let topology = Topology::build(&map, &edge_set);
        Ok(KnowledgeGraph {
            components: map,
            edges: edge_set,
            incidents,
            incoming,
            outgoing,
            topology,
        })
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.components.contains_key(id)
    }

    pub fn kind_of(&self, id: &str) -> Option<ComponentKind> {
        self.components.get(id).map(|c| c.kind)
    }

    /// Components in id order.
    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.values()
    }

    pub fn components_of(&self, kind: ComponentKind) -> impl Iterator<Item = &Component> {
        self.components.values().filter(move |c| c.kind == kind)
    }

    pub fn count(&self, kind: ComponentKind) -> usize {
        self.components_of(kind).count()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Edges in `(src, dst, relation)` order.
    pub fn edges(&self) -> impl Iterator<Item = &DependencyEdge> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn incoming(&self, id: &str) -> &[DependencyEdge] {
        self.incoming.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outgoing(&self, id: &str) -> &[DependencyEdge] {
        self.outgoing.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn incidents(&self) -> &[IncidentRecord] {
        &self.incidents
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Endpoint routers of a link, when both are recorded.
    pub fn link_endpoints(&self, link: &str) -> Option<(&ComponentId, &ComponentId)> {
        let idx = self.topology.link_index(link)?;
        let l = &self.topology.links()[idx];
        Some((&self.topology.routers()[l.a], &self.topology.routers()[l.b]))
    }

    /// Links incident to a router, in id order.
    pub fn incident_links(&self, router: &str) -> Vec<&ComponentId> {
        match self.topology.router_index(router) {
            Some(r) => self
                .topology
                .neighbors(r)
                .iter()
                .map(|&(_, l)| &self.topology.links()[l].id)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn with_incidents(mut self, incidents: Vec<IncidentRecord>) -> Self {
        self.incidents = incidents;
        self
    }

    /// Same components with no edges: identities and kinds survive, all
    /// dependency structure is dropped.
    pub fn id_only(&self) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(self.components.values().cloned().collect(), Vec::new(), Vec::new())
            .expect("subset of a valid graph")
    }

    /// Returns a copy with the given components and edges added.
    pub fn extended(&self, components: Vec<Component>, edges: Vec<DependencyEdge>) -> Result<KnowledgeGraph, KgError> {
        let mut all: Vec<Component> = self.components.values().cloned().collect();
        all.extend(components);
        let mut all_edges: Vec<DependencyEdge> = self.edges.iter().cloned().collect();
        all_edges.extend(edges);
        KnowledgeGraph::from_parts(all, all_edges, self.incidents.clone())
    }

    /// Canonical JSON: components sorted by id, edges by (src, dst, relation).
    pub fn to_canonical_json(&self) -> String {
        let g = CanonicalGraph {
            components: self.components.values().cloned().collect(),
            edges: self.edges.iter().cloned().collect(),
            incidents: self.incidents.clone(),
        };
        serde_json::to_string_pretty(&g).expect("graph serializes")
    }

    pub fn from_canonical_json(bytes: &[u8]) -> Result<KnowledgeGraph, KgError> {
        let g: CanonicalGraph = serde_json::from_slice(bytes)
            .map_err(|e| KgError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        KnowledgeGraph::from_parts(g.components, g.edges, g.incidents)
    }

    /// Edgelist text with one `SRC DST capacity latency` line per link.
    /// Isolated routers are not representable in this format.
    pub fn to_edgelist(&self) -> String {
        let topo = &self.topology;
        let mut out = String::new();
        let mut linked = vec![false; topo.routers().len()];
        for l in topo.links() {
            linked[l.a] = true;
            linked[l.b] = true;
        }
        // A self-loop line declares an isolated router.
        for (r, _) in linked.iter().enumerate().filter(|(_, &l)| !l) {
            out.push_str(&format!("{0} {0}\n", topo.routers()[r]));
        }
        for l in topo.links() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                topo.routers()[l.a],
                topo.routers()[l.b],
                l.capacity_mbps,
                l.prop_latency_ms
            ));
        }
        out
    }
}

fn check_attrs(c: &Component) -> Result<(), KgError> {
    let positive = |name: &str, v: Option<f64>| -> Result<(), KgError> {
        match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(KgError::Integrity(format!(
                "`{}`: {name} must be positive, got {x}",
                c.id
            ))),
            _ => Ok(()),
        }
    };
    positive("capacity_mbps", c.attrs.capacity_mbps)?;
    positive("prop_latency_ms", c.attrs.prop_latency_ms)?;
    positive("cpu_units", c.attrs.cpu_units)?;
    positive("demand_mbps", c.attrs.demand_mbps)?;
    match c.kind {
        ComponentKind::Link => {
            if c.attrs.capacity_mbps.is_none() || c.attrs.prop_latency_ms.is_none() {
                return Err(KgError::Integrity(format!(
                    "link `{}` needs capacity_mbps and prop_latency_ms",
                    c.id
                )));
            }
            if c.id.link_endpoints().is_none() {
                return Err(KgError::Integrity(format!("link id `{}` is not of the form A-B", c.id)));
            }
            if ComponentId::canonical(c.id.as_str()) != c.id {
                return Err(KgError::Integrity(format!("link id `{}` is not canonical", c.id)));
            }
        }
        ComponentKind::Router => {
            if c.id.as_str().contains('-') {
                return Err(KgError::Integrity(format!(
                    "router name `{}` may not contain `-`",
                    c.id
                )));
            }
        }
        ComponentKind::Flow => {
            if c.attrs.src.is_none() || c.attrs.dst.is_none() || c.attrs.demand_mbps.is_none() {
                return Err(KgError::Integrity(format!(
                    "flow `{}` needs src, dst and demand_mbps",
                    c.id
                )));
            }
            match c.attrs.priority {
                Some(1..=3) => {}
                other => {
                    return Err(KgError::Integrity(format!(
                        "flow `{}` priority must be 1..=3, got {other:?}",
                        c.id
                    )))
                }
            }
        }
        ComponentKind::Service | ComponentKind::Resource => {}
    }
    Ok(())
}

fn check_relation(src: &Component, dst: &Component, rel: Relation) -> Result<(), KgError> {
    use ComponentKind::*;
    let ok = match rel {
        Relation::ConnectsTo => src.kind == Router && dst.kind == Link,
        Relation::RoutesOver => matches!(src.kind, Flow | Service) && matches!(dst.kind, Link | Router),
        Relation::DependsOn | Relation::SharesResource | Relation::BacksUp => src.id != dst.id,
    };
    if ok {
        Ok(())
    } else {
        Err(KgError::Integrity(format!(
            "{rel:?} cannot join {} `{}` to {} `{}`",
            src.kind, src.id, dst.kind, dst.id
        )))
    }
}
