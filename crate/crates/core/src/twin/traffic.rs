use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TwinError;
use crate::kgraph::{ComponentKind, FlowSpec, KnowledgeGraph, ServiceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficFlow {
    pub flow_id: String,
    pub src: String,
    pub dst: String,
    pub demand_mbps: f64,
    pub priority: u8,
}

/// Offered flow demands. CSV form: `flow_id,src,dst,demand_mbps,priority`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficMatrix {
    pub flows: Vec<TrafficFlow>,
}

impl TrafficMatrix {
    pub fn new(flows: Vec<TrafficFlow>) -> Self {
        TrafficMatrix { flows }
    }

    pub fn parse_csv(bytes: &[u8]) -> Result<Self, TwinError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(bytes);
        let mut flows = Vec::new();
        for (i, rec) in rdr.deserialize::<TrafficFlow>().enumerate() {
            let flow = rec.map_err(|e| TwinError::Parse {
                context: e
                    .position()
                    .map_or_else(|| format!("record {}", i + 1), |p| format!("line {}", p.line())),
                message: e.to_string(),
            })?;
            flows.push(flow);
        }
        let m = TrafficMatrix { flows };
        m.check_values()?;
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("flow_id,src,dst,demand_mbps,priority\n");
        for f in &self.flows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                f.flow_id, f.src, f.dst, f.demand_mbps, f.priority
            ));
        }
        out
    }

    /// Demands of the graph's flow components, in id order.
    pub fn from_graph(kg: &KnowledgeGraph) -> Self {
        let flows = kg
            .components_of(ComponentKind::Flow)
            .map(|c| TrafficFlow {
                flow_id: c.id.to_string(),
                src: c.attrs.src.as_ref().map(|s| s.to_string()).unwrap_or_default(),
                dst: c.attrs.dst.as_ref().map(|s| s.to_string()).unwrap_or_default(),
                demand_mbps: c.attrs.demand_mbps.unwrap_or(0.0),
                priority: c.attrs.priority.unwrap_or(2),
            })
            .collect();
        TrafficMatrix { flows }
    }

    /// The flows as a service spec, for adding them to a graph.
    pub fn to_service_spec(&self) -> ServiceSpec {
        ServiceSpec {
            flows: self
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
            ..ServiceSpec::default()
        }
    }

    pub fn total_demand(&self) -> f64 {
        self.flows.iter().map(|f| f.demand_mbps).sum()
    }

    fn check_values(&self) -> Result<(), TwinError> {
        let mut ids = BTreeSet::new();
        for f in &self.flows {
            if !ids.insert(f.flow_id.as_str()) {
                return Err(TwinError::Integrity(format!("duplicate flow id `{}`", f.flow_id)));
            }
            if !(f.demand_mbps.is_finite() && f.demand_mbps > 0.0) {
                return Err(TwinError::Integrity(format!(
                    "flow `{}` demand must be positive",
                    f.flow_id
                )));
            }
            if !(1..=3).contains(&f.priority) {
                return Err(TwinError::Integrity(format!(
                    "flow `{}` priority must be 1..=3",
                    f.flow_id
                )));
            }
        }
        Ok(())
    }

    /// Checks ids, values and that every endpoint is a router of `kg`.
    pub fn check_against(&self, kg: &KnowledgeGraph) -> Result<(), TwinError> {
        self.check_values()?;
        for f in &self.flows {
            for end in [&f.src, &f.dst] {
                if kg.kind_of(end) != Some(ComponentKind::Router) {
                    return Err(TwinError::Integrity(format!(
                        "flow `{}` references unknown router `{end}`",
                        f.flow_id
                    )));
                }
            }
        }
        Ok(())
    }
}
