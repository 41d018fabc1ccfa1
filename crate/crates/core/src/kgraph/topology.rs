//! Index over the router/link layer.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{Component, ComponentId, ComponentKind, DependencyEdge, Relation};

#[derive(Debug, Clone, PartialEq)]
pub struct TopoLink {
    pub id: ComponentId,
    /// Router index of the lexicographically smaller endpoint.
    pub a: usize,
    pub b: usize,
    pub capacity_mbps: f64,
    pub prop_latency_ms: f64,
}

impl TopoLink {
    pub fn other(&self, r: usize) -> usize {
        if r == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A routed path. `routers` has one more element than `links`.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub cost: f64,
    pub routers: Vec<usize>,
    pub links: Vec<usize>,
}

/// Routers indexed in id order, links with both endpoints known, and
/// per-router adjacency sorted by neighbour index.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    routers: Vec<ComponentId>,
    router_pos: BTreeMap<ComponentId, usize>,
    links: Vec<TopoLink>,
    link_pos: BTreeMap<ComponentId, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Topology {
    pub(super) fn build(components: &BTreeMap<ComponentId, Component>, edges: &BTreeSet<DependencyEdge>) -> Self {
        let routers: Vec<ComponentId> = components
            .values()
            .filter(|c| c.kind == ComponentKind::Router)
            .map(|c| c.id.clone())
            .collect();
        let router_pos: BTreeMap<ComponentId, usize> =
            routers.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();

        let mut ends: BTreeMap<&ComponentId, Vec<usize>> = BTreeMap::new();
        for e in edges.iter().filter(|e| e.relation == Relation::ConnectsTo) {
            ends.entry(&e.dst).or_default().push(router_pos[&e.src]);
        }
        let mut links = Vec::new();
        for c in components.values().filter(|c| c.kind == ComponentKind::Link) {
            if let Some(rs) = ends.get(&c.id) {
                if rs.len() == 2 {
                    links.push(TopoLink {
                        id: c.id.clone(),
                        a: rs[0].min(rs[1]),
                        b: rs[0].max(rs[1]),
                        capacity_mbps: c.capacity_mbps(),
                        prop_latency_ms: c.prop_latency_ms(),
                    });
                }
            }
        }
        let link_pos = links.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); routers.len()];
        for (i, l) in links.iter().enumerate() {
            adjacency[l.a].push((l.b, i));
            adjacency[l.b].push((l.a, i));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Topology {
            routers,
            router_pos,
            links,
            link_pos,
            adjacency,
        }
    }

    pub fn routers(&self) -> &[ComponentId] {
        &self.routers
    }

    pub fn links(&self) -> &[TopoLink] {
        &self.links
    }

    pub fn router_index(&self, id: &str) -> Option<usize> {
        self.router_pos.get(id).copied()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_pos.get(id).copied()
    }

    /// `(neighbour router, link)` pairs for a router.
    pub fn neighbors(&self, r: usize) -> &[(usize, usize)] {
        &self.adjacency[r]
    }

    /// Single-source shortest paths by total propagation latency over the
    /// routers and links accepted by the filters. Equal-cost paths are
    /// resolved toward the lexicographically smallest router sequence.
    pub fn shortest_paths(
        &self,
        src: usize,
        link_ok: impl Fn(usize) -> bool,
        router_ok: impl Fn(usize) -> bool,
    ) -> Vec<Option<Route>> {
        self.shortest_paths_weighted(src, |l| self.links[l].prop_latency_ms, link_ok, router_ok)
    }

    /// As [`Topology::shortest_paths`] with caller-supplied positive link weights.
    pub fn shortest_paths_weighted(
        &self,
        src: usize,
        weight: impl Fn(usize) -> f64,
        link_ok: impl Fn(usize) -> bool,
        router_ok: impl Fn(usize) -> bool,
    ) -> Vec<Option<Route>> {
        let n = self.routers.len();
        let mut best: Vec<Option<Route>> = vec![None; n];
        if src >= n || !router_ok(src) {
            return best;
        }
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[src] = Some(Route {
            cost: 0.0,
            routers: vec![src],
            links: Vec::new(),
        });
        heap.push(Candidate {
            cost: 0.0,
            routers: vec![src],
        });
        while let Some(Candidate { routers, .. }) = heap.pop() {
            let u = *routers.last().expect("non-empty path");
            if settled[u] {
                continue;
            }
            // Stale heap entries are skipped: only the current best may settle.
            if best[u].as_ref().map(|b| &b.routers) != Some(&routers) {
                continue;
            }
            settled[u] = true;
            let here = best[u].clone().expect("settled node has a route");
            for &(v, l) in &self.adjacency[u] {
                if settled[v] || !link_ok(l) || !router_ok(v) {
                    continue;
                }
                let cost = here.cost + weight(l);
                let mut path = here.routers.clone();
                path.push(v);
                let better = match &best[v] {
                    None => true,
                    Some(cur) => match cost.total_cmp(&cur.cost) {
                        Ordering::Less => true,
                        Ordering::Equal => path < cur.routers,
                        Ordering::Greater => false,
                    },
                };
                if better {
                    let mut links = here.links.clone();
                    links.push(l);
                    heap.push(Candidate {
                        cost,
                        routers: path.clone(),
                    });
                    best[v] = Some(Route {
                        cost,
                        routers: path,
                        links,
                    });
                }
            }
        }
        best
    }
}

/// Min-heap entry ordered by (cost, router sequence).
struct Candidate {
    cost: f64,
    routers: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.routers.cmp(&self.routers))
    }
}
