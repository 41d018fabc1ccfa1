//! Topology and service-spec ingestion.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    Attrs, Component, ComponentId, ComponentKind, DependencyEdge, KgError, KnowledgeGraph, Relation,
    DEFAULT_CAPACITY_MBPS, DEFAULT_LATENCY_MS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyFormat {
    Graphml,
    Edgelist,
}

impl FromStr for TopologyFormat {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graphml" | "xml" => Ok(TopologyFormat::Graphml),
            "edgelist" | "edges" | "txt" => Ok(TopologyFormat::Edgelist),
            other => Err(KgError::Argument(format!("unknown topology format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestWarning {
    /// A repeated endpoint pair; capacities were summed into one link.
    DuplicateLink {
        id: ComponentId,
    },
    SelfLoop {
        router: ComponentId,
    },
    /// A link attribute that could not be used; the default was kept.
    BadAttribute {
        context: String,
        message: String,
    },
    /// The router/link layer has more than one connected component.
    Disconnected {
        components: Vec<Vec<ComponentId>>,
    },
}

/// Result of loading a topology: the graph plus anything worth a warning.
#[derive(Debug, Clone)]
pub struct Ingest {
    pub graph: KnowledgeGraph,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Default)]
struct Builder {
    routers: BTreeMap<ComponentId, Option<String>>,
    links: BTreeMap<ComponentId, (ComponentId, ComponentId, f64, f64)>,
    warnings: Vec<IngestWarning>,
}

impl Builder {
    fn add_router(&mut self, name: &str, label: Option<String>, context: &str) -> Result<(), KgError> {
        let id = ComponentId::new(name).map_err(|e| KgError::parse(context, e.to_string()))?;
        if id.as_str().contains('-') {
            return Err(KgError::Integrity(format!(
                "router name `{id}` may not contain `-` ({context})"
            )));
        }
        if self.routers.insert(id.clone(), label).is_some() {
            return Err(KgError::Integrity(format!("duplicate node `{id}` ({context})")));
        }
        Ok(())
    }

    fn ensure_router(&mut self, name: &str, context: &str) -> Result<(), KgError> {
        if !self.routers.contains_key(name) {
            self.add_router(name, None, context)?;
        }
        Ok(())
    }

    fn add_link(&mut self, a: &str, b: &str, capacity: f64, latency: f64) {
        if a == b {
            self.warnings.push(IngestWarning::SelfLoop {
                router: ComponentId(a.to_string()),
            });
            return;
        }
        let id = ComponentId::link(a, b);
        match self.links.get_mut(&id) {
            Some(existing) => {
                existing.2 += capacity;
                existing.3 = existing.3.min(latency);
                self.warnings.push(IngestWarning::DuplicateLink { id });
            }
            None => {
                let (x, y) = if a <= b { (a, b) } else { (b, a) };
                self.links.insert(
                    id,
                    (
                        ComponentId(x.to_string()),
                        ComponentId(y.to_string()),
                        capacity,
                        latency,
                    ),
                );
            }
        }
    }

    fn finish(self) -> Result<Ingest, KgError> {
        let mut components = Vec::new();
        let mut edges = Vec::new();
        for (id, label) in self.routers {
            let mut c = Component::router(id);
            c.attrs.label = label;
            components.push(c);
        }
        for (id, (a, b, cap, lat)) in self.links {
            components.push(Component {
                id: id.clone(),
                kind: ComponentKind::Link,
                attrs: Attrs {
                    capacity_mbps: Some(cap),
                    prop_latency_ms: Some(lat),
                    ..Attrs::default()
                },
            });
            edges.push(DependencyEdge::new(a, id.clone(), Relation::ConnectsTo));
            edges.push(DependencyEdge::new(b, id, Relation::ConnectsTo));
        }
        let graph = KnowledgeGraph::from_parts(components, edges, Vec::new())?;
        let mut warnings = self.warnings;
        let groups = graph.router_link_components();
        if groups.len() > 1 {
            log::warn!("topology has {} disconnected components", groups.len());
            warnings.push(IngestWarning::Disconnected { components: groups });
        }
        for w in &warnings {
            match w {
                IngestWarning::DuplicateLink { id } => log::warn!("duplicate link {id} merged"),
                IngestWarning::SelfLoop { router } => log::warn!("self-loop on {router} skipped"),
                IngestWarning::BadAttribute { context, message } => {
                    log::warn!("{context}: {message}")
                }
                IngestWarning::Disconnected { .. } => {}
            }
        }
        Ok(Ingest { graph, warnings })
    }
}

/// Loads a topology document. One router per node and one link per
/// distinct endpoint pair, each link wired to its endpoints by two
/// `ConnectsTo` edges.
pub fn load_topology(bytes: &[u8], format: TopologyFormat) -> Result<Ingest, KgError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| KgError::parse(format!("byte {}", e.valid_up_to()), "document is not valid UTF-8"))?;
    match format {
        TopologyFormat::Edgelist => parse_edgelist(text),
        TopologyFormat::Graphml => parse_graphml(text),
    }
}

fn parse_edgelist(text: &str) -> Result<Ingest, KgError> {
    let mut b = Builder::default();
    for (n, raw) in text.lines().enumerate() {
        let ctx = format!("line {}", n + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(KgError::parse(
                ctx,
                format!(
                    "expected `SRC DST [capacity_mbps] [latency_ms]`, got {} fields",
                    fields.len()
                ),
            ));
        }
        let number = |i: usize, name: &str, default: f64| -> Result<f64, KgError> {
            match fields.get(i) {
                None => Ok(default),
                Some(s) => match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                    _ => Err(KgError::parse(
                        &ctx,
                        format!("{name} must be a positive number, got `{s}`"),
                    )),
                },
            }
        };
        let cap = number(2, "capacity_mbps", DEFAULT_CAPACITY_MBPS)?;
        let lat = number(3, "latency_ms", DEFAULT_LATENCY_MS)?;
        b.ensure_router(fields[0], &ctx)?;
        b.ensure_router(fields[1], &ctx)?;
        b.add_link(fields[0], fields[1], cap, lat);
    }
    b.finish()
}

enum EdgeKey {
    CapacityBps,
    CapacityMbps,
    LatencyMs,
}

fn parse_graphml(text: &str) -> Result<Ingest, KgError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        KgError::parse(format!("line {} column {}", pos.row, pos.col), e.to_string())
    })?;
    let at = |node: roxmltree::Node| {
        let pos = doc.text_pos_at(node.range().start);
        format!("line {} <{}>", pos.row, node.tag_name().name())
    };

    let mut node_label_key = None;
    let mut edge_keys: BTreeMap<String, EdgeKey> = BTreeMap::new();
    for key in doc.descendants().filter(|n| n.has_tag_name_local("key")) {
        let (Some(id), Some(name)) = (key.attribute("id"), key.attribute("attr.name")) else {
            continue;
        };
        let domain = key.attribute("for").unwrap_or("all");
        if matches!(domain, "node" | "all") && name == "label" {
            node_label_key = Some(id.to_string());
        }
        if matches!(domain, "edge" | "all") {
            let kind = match name {
                "LinkSpeedRaw" => Some(EdgeKey::CapacityBps),
                "capacity_mbps" | "capacity" | "bandwidth" => Some(EdgeKey::CapacityMbps),
                "latency" | "latency_ms" | "prop_latency_ms" | "delay" => Some(EdgeKey::LatencyMs),
                _ => None,
            };
            if let Some(k) = kind {
                edge_keys.insert(id.to_string(), k);
            }
        }
    }

    let graph = doc
        .descendants()
        .find(|n| n.has_tag_name_local("graph"))
        .ok_or_else(|| KgError::parse("document", "no <graph> element"))?;

    let mut b = Builder::default();
    for node in graph.children().filter(|n| n.has_tag_name_local("node")) {
        let ctx = at(node);
        let id = node
            .attribute("id")
            .ok_or_else(|| KgError::parse(&ctx, "node without id"))?;
        let label = node_label_key
            .as_ref()
            .and_then(|k| data_value(node, k))
            .map(str::to_string);
        b.add_router(id, label, &ctx)?;
    }
    for edge in graph.children().filter(|n| n.has_tag_name_local("edge")) {
        let ctx = at(edge);
        let src = edge
            .attribute("source")
            .ok_or_else(|| KgError::parse(&ctx, "edge without source"))?;
        let dst = edge
            .attribute("target")
            .ok_or_else(|| KgError::parse(&ctx, "edge without target"))?;
        for end in [src, dst] {
            if !b.routers.contains_key(end) {
                return Err(KgError::parse(&ctx, format!("edge references unknown node `{end}`")));
            }
        }
        let mut cap = None;
        let mut lat = None;
        for data in edge.children().filter(|n| n.has_tag_name_local("data")) {
            let Some(kind) = data.attribute("key").and_then(|k| edge_keys.get(k)) else {
                continue;
            };
            let raw = data.text().unwrap_or("").trim();
            let value = match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => v,
                _ => {
                    b.warnings.push(IngestWarning::BadAttribute {
                        context: ctx.clone(),
                        message: format!("ignoring non-positive or non-numeric value `{raw}`"),
                    });
                    continue;
                }
            };
            match kind {
                EdgeKey::CapacityBps => cap = Some(value / 1e6),
                EdgeKey::CapacityMbps => cap = cap.or(Some(value)),
                EdgeKey::LatencyMs => lat = Some(value),
            }
        }
        b.add_link(
            src,
            dst,
            cap.unwrap_or(DEFAULT_CAPACITY_MBPS),
            lat.unwrap_or(DEFAULT_LATENCY_MS),
        );
    }
    b.finish()
}

trait LocalName {
    fn has_tag_name_local(&self, name: &str) -> bool;
}

impl LocalName for roxmltree::Node<'_, '_> {
    fn has_tag_name_local(&self, name: &str) -> bool {
        self.is_element() && self.tag_name().name() == name
    }
}

fn data_value<'a>(node: roxmltree::Node<'a, '_>, key: &str) -> Option<&'a str> {
    node.children()
        .filter(|n| n.has_tag_name_local("data"))
        .find(|n| n.attribute("key") == Some(key))
        .and_then(|n| n.text())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub demand_mbps: f64,
    #[serde(default = "default_priority")]
    pub priority: u8,
}

fn default_priority() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDef {
    pub id: String,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

/// A shared resource (power feed, line card, ...) and the components that
/// draw on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub id: String,
    #[serde(default)]
    pub shared_by: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub services: Vec<ServiceDef>,
    #[serde(default)]
    pub resources: Vec<ResourceSpec>,
}

impl ServiceSpec {
    pub fn is_empty(&self) -> bool {
        self.flows.is_empty() && self.services.is_empty() && self.resources.is_empty()
    }
}

pub fn parse_service_spec(bytes: &[u8]) -> Result<ServiceSpec, KgError> {
    serde_json::from_slice(bytes)
        .map_err(|e| KgError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

impl KnowledgeGraph {
    /// Adds flows, services and shared resources. Each flow gets
    /// `RoutesOver` edges to the links of its latency-shortest path over the
    /// intact topology; each service a `DependsOn` edge per dependency.
    pub fn build_service_layer(&self, spec: &ServiceSpec) -> Result<KnowledgeGraph, KgError> {
        if spec.is_empty() {
            return Ok(self.clone());
        }
        let mut comps = Vec::new();
        let mut edges = Vec::new();
        let router = |name: &str| -> Result<ComponentId, KgError> {
            match self.kind_of(name) {
                Some(ComponentKind::Router) => Ok(ComponentId(name.to_string())),
                Some(k) => Err(KgError::Integrity(format!("`{name}` is a {k}, not a router"))),
                None => Err(KgError::Integrity(format!("unknown router `{name}`"))),
            }
        };
        let topo = self.topology();
        let mut trees: BTreeMap<usize, Vec<Option<super::Route>>> = BTreeMap::new();
        for f in &spec.flows {
            let id = ComponentId::new(f.id.as_str())?;
            let src = router(&f.src)?;
            let dst = router(&f.dst)?;
            if !(f.demand_mbps.is_finite() && f.demand_mbps > 0.0) {
                return Err(KgError::Integrity(format!("flow `{id}` demand must be positive")));
            }
            if !(1..=3).contains(&f.priority) {
                return Err(KgError::Integrity(format!("flow `{id}` priority must be 1..=3")));
            }
            let (s, d) = (topo.router_index(src.as_str()), topo.router_index(dst.as_str()));
            if let (Some(s), Some(d)) = (s, d) {
                let tree = trees
                    .entry(s)
                    .or_insert_with(|| topo.shortest_paths(s, |_| true, |_| true));
                match &tree[d] {
                    Some(route) => {
                        for &l in &route.links {
                            edges.push(DependencyEdge::new(
                                id.clone(),
                                topo.links()[l].id.clone(),
                                Relation::RoutesOver,
                            ));
                        }
                    }
                    None => log::warn!("flow {id}: no path from {src} to {dst}"),
                }
            }
            comps.push(Component {
                id,
                kind: ComponentKind::Flow,
                attrs: Attrs {
                    src: Some(src),
                    dst: Some(dst),
                    demand_mbps: Some(f.demand_mbps),
                    priority: Some(f.priority),
                    ..Attrs::default()
                },
            });
        }
        let known = |name: &str, comps: &[Component]| -> Option<ComponentId> {
            if self.contains(name) || comps.iter().any(|c| c.id.as_str() == name) {
                Some(ComponentId(name.to_string()))
            } else {
                None
            }
        };
        for s in &spec.services {
            comps.push(Component {
                id: ComponentId::new(s.id.as_str())?,
                kind: ComponentKind::Service,
                attrs: Attrs::default(),
            });
        }
        for s in &spec.services {
            for dep in &s.depends_on {
                let target = known(dep, &comps)
                    .ok_or_else(|| KgError::Integrity(format!("service `{}` depends on unknown `{dep}`", s.id)))?;
                edges.push(DependencyEdge::new(
                    ComponentId(s.id.clone()),
                    target,
                    Relation::DependsOn,
                ));
            }
        }
        for r in &spec.resources {
            let rid = ComponentId::new(r.id.as_str())?;
            comps.push(Component {
                id: rid.clone(),
                kind: ComponentKind::Resource,
                attrs: Attrs::default(),
            });
            for user in &r.shared_by {
                let src = known(user, &comps)
                    .ok_or_else(|| KgError::Integrity(format!("resource `{}` shared by unknown `{user}`", r.id)))?;
                edges.push(DependencyEdge::new(src, rid.clone(), Relation::SharesResource));
            }
        }
        self.extended(comps, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_edgelist() {
        let ing = load_topology(b"A B\n", TopologyFormat::Edgelist).unwrap();
        let kg = ing.graph;
        assert_eq!(kg.count(ComponentKind::Router), 2);
        assert_eq!(kg.count(ComponentKind::Link), 1);
        let link = kg.component("A-B").unwrap();
        assert_eq!(link.capacity_mbps(), DEFAULT_CAPACITY_MBPS);
        assert_eq!(link.prop_latency_ms(), DEFAULT_LATENCY_MS);
        assert_eq!(kg.edge_count(), 2);
        assert!(ing.warnings.is_empty());
    }

    #[test]
    fn edgelist_round_trip_keeps_isolated_routers() {
        let kg = load_topology(b"A A 1\nB C 200 3\n", TopologyFormat::Edgelist)
            .unwrap()
            .graph;
        let text = kg.to_edgelist();
        let back = load_topology(text.as_bytes(), TopologyFormat::Edgelist).unwrap().graph;
        assert_eq!(back.to_canonical_json(), kg.to_canonical_json());
    }

    #[test]
    fn duplicate_edges_merge_with_warning() {
        let ing = load_topology(b"A B\nB A 500\n", TopologyFormat::Edgelist).unwrap();
        let links: Vec<_> = ing.graph.components_of(ComponentKind::Link).collect();
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].capacity_mbps(), 1500.0);
        assert_eq!(
            ing.warnings,
            vec![IngestWarning::DuplicateLink {
                id: ComponentId::link("A", "B")
            }]
        );
    }

    #[test]
    fn edgelist_comments_and_errors() {
        let ing = load_topology(b"# header\n\nA B 100 2 # trailing\n", TopologyFormat::Edgelist).unwrap();
        assert_eq!(ing.graph.component("A-B").unwrap().capacity_mbps(), 100.0);
        let err = load_topology(b"A B\nC\n", TopologyFormat::Edgelist).unwrap_err();
        assert!(
            matches!(err, KgError::Parse { ref context, .. } if context == "line 2"),
            "{err}"
        );
        let err = load_topology(b"A B -5\n", TopologyFormat::Edgelist).unwrap_err();
        assert!(matches!(err, KgError::Parse { .. }));
        assert!(load_topology(b"A-1 B\n", TopologyFormat::Edgelist).is_err());
    }

    #[test]
    fn disconnected_topology_warns() {
        let ing = load_topology(b"A B\nC D\n", TopologyFormat::Edgelist).unwrap();
        assert!(matches!(
            ing.warnings.last(),
            Some(IngestWarning::Disconnected { components }) if components.len() == 2
        ));
    }

    const GRAPHML: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key attr.name="label" attr.type="string" for="node" id="d0"/>
  <key attr.name="LinkSpeedRaw" attr.type="double" for="edge" id="d1"/>
  <key attr.name="latency" attr.type="double" for="edge" id="d2"/>
  <graph edgedefault="undirected">
    <node id="0"><data key="d0">Sydney</data></node>
    <node id="1"><data key="d0">Perth</data></node>
    <node id="2"/>
    <edge source="0" target="1"><data key="d1">10000000000</data><data key="d2">25</data></edge>
    <edge source="2" target="1"/>
  </graph>
</graphml>"#;

    #[test]
    fn graphml_core_is_parsed() {
        let kg = load_topology(GRAPHML.as_bytes(), TopologyFormat::Graphml)
            .unwrap()
            .graph;
        assert_eq!(kg.count(ComponentKind::Router), 3);
        assert_eq!(kg.component("0").unwrap().attrs.label.as_deref(), Some("Sydney"));
        let l = kg.component("0-1").unwrap();
        assert_eq!(l.capacity_mbps(), 10_000.0);
        assert_eq!(l.prop_latency_ms(), 25.0);
        let l = kg.component("1-2").unwrap();
        assert_eq!(l.capacity_mbps(), DEFAULT_CAPACITY_MBPS);
    }

    #[test]
    fn graphml_errors_carry_context() {
        let err = load_topology(b"<graphml><graph><node id='a'></graph>", TopologyFormat::Graphml).unwrap_err();
        assert!(matches!(err, KgError::Parse { ref context, .. } if context.starts_with("line 1")));
        let dup = r#"<graphml><graph><node id="a"/><node id="a"/></graph></graphml>"#;
        assert!(matches!(
            load_topology(dup.as_bytes(), TopologyFormat::Graphml),
            Err(KgError::Integrity(_))
        ));
        let dangling = "<graphml><graph>\n<node id=\"a\"/>\n<edge source=\"a\" target=\"z\"/></graph></graphml>";
        let err = load_topology(dangling.as_bytes(), TopologyFormat::Graphml).unwrap_err();
        assert!(
            matches!(err, KgError::Parse { ref context, .. } if context == "line 3 <edge>"),
            "{err}"
        );
    }

    fn chain() -> KnowledgeGraph {
        load_topology(b"A B\nB C\n", TopologyFormat::Edgelist).unwrap().graph
    }

    #[test]
    fn service_layer_routes_flows() {
        let spec = parse_service_spec(
            br#"{"flows":[{"id":"F1","src":"A","dst":"C","demand_mbps":100,"priority":1}],
                 "services":[{"id":"S1","depends_on":["F1"]}]}"#,
        )
        .unwrap();
        let kg = chain().build_service_layer(&spec).unwrap();
        assert_eq!(kg.count(ComponentKind::Service), 1);
        assert_eq!(kg.count(ComponentKind::Flow), 1);
        let out: Vec<_> = kg.outgoing("F1").iter().map(|e| (e.dst.as_str(), e.relation)).collect();
        assert_eq!(out, vec![("A-B", Relation::RoutesOver), ("B-C", Relation::RoutesOver)]);
        assert_eq!(kg.outgoing("S1")[0].dst.as_str(), "F1");
        assert_eq!(kg.outgoing("S1")[0].relation, Relation::DependsOn);
    }

    #[test]
    fn empty_spec_is_identity() {
        let kg = chain();
        assert_eq!(kg.build_service_layer(&ServiceSpec::default()).unwrap(), kg);
    }

    #[test]
    fn unknown_router_is_named() {
        let spec = ServiceSpec {
            flows: vec![FlowSpec {
                id: "F1".into(),
                src: "A".into(),
                dst: "Z".into(),
                demand_mbps: 1.0,
                priority: 1,
            }],
            ..ServiceSpec::default()
        };
        let err = chain().build_service_layer(&spec).unwrap_err();
        assert!(matches!(err, KgError::Integrity(ref m) if m.contains("`Z`")), "{err}");
    }
}
