//! Graph queries: dependency closure, reachability, subgraph extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{ComponentId, ComponentKind, DependencyEdge, KgError, KnowledgeGraph, Relation};

/// Upper bound on `extract_subgraph` radius.
pub const MAX_SUBGRAPH_RADIUS: usize = 10;

impl KnowledgeGraph {
    fn lookup(&self, id: &str) -> Result<&super::Component, KgError> {
        self.component(id).ok_or_else(|| KgError::Lookup(id.to_string()))
    }

    /// Components a failure of `id` can propagate to: everything reachable
    /// by following `DependsOn`, `RoutesOver` and `SharesResource` edges
    /// backwards, plus link/endpoint adjacency in both directions. Contains
    /// `id` itself.
    pub fn dependency_closure(&self, id: &str) -> Result<BTreeSet<ComponentId>, KgError> {
        let start = self.lookup(id)?.id.clone();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start.clone());
        queue.push_back(start);
        while let Some(cur) = queue.pop_front() {
            for next in self.propagation_successors(&cur) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        Ok(seen)
    }

    fn propagation_successors(&self, id: &ComponentId) -> Vec<ComponentId> {
        let mut out: Vec<ComponentId> = self
            .incoming(id.as_str())
            .iter()
            .filter(|e| {
                matches!(
                    e.relation,
                    Relation::DependsOn | Relation::RoutesOver | Relation::SharesResource
                )
            })
            .map(|e| e.src.clone())
            .collect();
        match self.kind_of(id.as_str()) {
            Some(ComponentKind::Link) => {
                out.extend(
                    self.incoming(id.as_str())
                        .iter()
                        .filter(|e| e.relation == Relation::ConnectsTo)
                        .map(|e| e.src.clone()),
                );
            }
            Some(ComponentKind::Router) => {
                out.extend(
                    self.outgoing(id.as_str())
                        .iter()
                        .filter(|e| e.relation == Relation::ConnectsTo)
                        .map(|e| e.dst.clone()),
                );
            }
            _ => {}
        }
        out
    }

    /// Whether routers `a` and `b` are connected over links and routers not
    /// in `failed`.
    pub fn reachable(&self, a: &str, b: &str, failed: &BTreeSet<ComponentId>) -> Result<bool, KgError> {
        for r in [a, b] {
            let c = self.lookup(r)?;
            if c.kind != ComponentKind::Router {
                return Err(KgError::Kind {
                    id: r.to_string(),
                    expected: "router",
                    actual: c.kind,
                });
            }
        }
        if failed.contains(a) || failed.contains(b) {
            return Ok(false);
        }
        let topo = self.topology();
        let (Some(s), Some(t)) = (topo.router_index(a), topo.router_index(b)) else {
            return Ok(false);
        };
        let mut seen = vec![false; topo.routers().len()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            if u == t {
                return Ok(true);
            }
            for &(v, l) in topo.neighbors(u) {
                if !seen[v]
                    && !failed.contains(topo.links()[l].id.as_str())
                    && !failed.contains(topo.routers()[v].as_str())
                {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        Ok(false)
    }

    /// Components within `radius` undirected hops of any seed plus all edges
    /// among them. Two routers sharing a link are one hop apart; every other
    /// dependency edge is one hop. Links whose two endpoints are both
    /// included are included too.
    pub fn extract_subgraph(&self, seeds: &[ComponentId], radius: usize) -> Result<KnowledgeGraph, KgError> {
        if radius > MAX_SUBGRAPH_RADIUS {
            return Err(KgError::Argument(format!(
                "radius {radius} exceeds {MAX_SUBGRAPH_RADIUS}"
            )));
        }
        let mut dist: BTreeMap<ComponentId, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            let id = self.lookup(s.as_str())?.id.clone();
            if dist.insert(id.clone(), 0).is_none() {
                queue.push_back(id);
            }
        }
        let topo = self.topology();
        while let Some(cur) = queue.pop_front() {
            let d = dist[&cur];
            if d == radius {
                continue;
            }
            let mut next: Vec<ComponentId> = self
                .incoming(cur.as_str())
                .iter()
                .map(|e| e.src.clone())
                .chain(self.outgoing(cur.as_str()).iter().map(|e| e.dst.clone()))
                .collect();
            if let Some(r) = topo.router_index(cur.as_str()) {
                next.extend(topo.neighbors(r).iter().map(|&(v, _)| topo.routers()[v].clone()));
            }
            for n in next {
                if !dist.contains_key(&n) {
                    dist.insert(n.clone(), d + 1);
                    queue.push_back(n);
                }
            }
        }
        let mut keep: BTreeSet<ComponentId> = dist.into_keys().collect();
        for l in topo.links() {
            if keep.contains(&topo.routers()[l.a]) && keep.contains(&topo.routers()[l.b]) {
                keep.insert(l.id.clone());
            }
        }
        let components = self.components().filter(|c| keep.contains(&c.id)).cloned().collect();
        let edges: Vec<DependencyEdge> = self
            .edges()
            .filter(|e| keep.contains(&e.src) && keep.contains(&e.dst))
            .cloned()
            .collect();
        KnowledgeGraph::from_parts(components, edges, Vec::new())
    }

    /// Connected components of the router/link layer, each sorted, ordered
    /// by their smallest member.
    pub fn router_link_components(&self) -> Vec<Vec<ComponentId>> {
        let topo = self.topology();
        let n = topo.routers().len();
        let mut group = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if group[s] != usize::MAX {
                continue;
            }
            let g = out.len();
            let mut members = Vec::new();
            let mut queue = VecDeque::from([s]);
            group[s] = g;
            while let Some(u) = queue.pop_front() {
                members.push(topo.routers()[u].clone());
                for &(v, l) in topo.neighbors(u) {
                    members.push(topo.links()[l].id.clone());
                    if group[v] == usize::MAX {
                        group[v] = g;
                        queue.push_back(v);
                    }
                }
            }
            members.sort();
            members.dedup();
            out.push(members);
        }
        out
    }
}
