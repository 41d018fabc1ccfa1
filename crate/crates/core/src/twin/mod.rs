//! Deterministic event-driven network twin.
//!
//! The twin keeps flow-level state: every flow follows its latency-shortest
//! path over components that are up, links carry the sum of the demands
//! routed over them, and KPIs are derived from link utilization:
//!
//! * per-link latency is `prop_latency_ms * m(u)` where `m(u) = 1/(1-u)`
//!   below the knee at `u = 0.95`, continues linearly above it, and is
//!   capped at `latency_cap`;
//! * a router whose CPU load exceeds its cpu_units multiplies the latency
//!   of the hop it forwards onto by `1 + (load - units) / units`;
//! * a link above capacity drops `(u-1)/u` of what it carries, and a flow
//!   loses `1 - prod(1 - loss_l)` over its path;
//! * flows whose path broke are blackholed until rerouting converges, which
//!   takes `detect_delay_ms + per_hop_update_ms * hops` of the longest new
//!   path.
//!
//! Links that stay at or above `cascade_threshold` for `cascade_grace_s`
//! trip, producing induced `cascading_trip` events whose cause is the event
//! that pushed them over. All constants live in [`SimulationConfig`].

mod engine;
mod state;
mod traffic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgraph::ComponentId;
use crate::scenario::{FailureEvent, Severity};

pub use engine::{run, run_baseline, run_with_plan};
pub use state::{FlowState, LinkState, NetworkState, RouterState};
pub use traffic::{TrafficFlow, TrafficMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("traffic parse error at {context}: {message}")]
    Parse { context: String, message: String },
}

/// A value per severity level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BySeverity {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl BySeverity {
    pub fn get(&self, s: Severity) -> f64 {
        match s {
            Severity::Low => self.low,
            Severity::Medium => self.medium,
            Severity::High => self.high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub horizon_s: f64,
    pub sample_interval_s: f64,
    /// Utilization at or above which a link starts its trip timer.
    pub cascade_threshold: f64,
    pub cascade_grace_s: f64,
    /// Upper bound of the queueing latency multiplier.
    pub latency_cap: f64,
    pub detect_delay_ms: f64,
    pub per_hop_update_ms: f64,
    /// Remaining capacity fraction after a fiber failure; 0 takes the link down.
    pub fiber_capacity_factor: BySeverity,
    /// CPU load added by `router_overload`, in multiples of the router's cpu_units.
    pub overload_cpu_factor: BySeverity,
    /// Default demand multiplier of `traffic_spike` when the event has no
    /// `spike_multiplier` param.
    pub spike_multiplier: BySeverity,
    /// Trip routers whose CPU load stays above `cascade_threshold * cpu_units`.
    pub router_trip: bool,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            horizon_s: 3600.0,
            sample_interval_s: 1.0,
            cascade_threshold: 1.0,
            cascade_grace_s: 5.0,
            latency_cap: 20.0,
            detect_delay_ms: 50.0,
            per_hop_update_ms: 10.0,
            fiber_capacity_factor: BySeverity {
                low: 0.8,
                medium: 0.5,
                high: 0.0,
            },
            overload_cpu_factor: BySeverity {
                low: 0.5,
                medium: 1.0,
                high: 2.0,
            },
            spike_multiplier: BySeverity {
                low: 2.0,
                medium: 5.0,
                high: 10.0,
            },
            router_trip: false,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn check(&self) -> Result<(), TwinError> {
        let positive = [
            ("horizon_s", self.horizon_s),
            ("sample_interval_s", self.sample_interval_s),
            ("cascade_grace_s", self.cascade_grace_s),
            ("latency_cap", self.latency_cap),
            ("detect_delay_ms", self.detect_delay_ms),
            ("per_hop_update_ms", self.per_hop_update_ms),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TwinError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.cascade_threshold.is_finite() && self.cascade_threshold >= 0.5) {
            return Err(TwinError::Config(format!(
                "cascade_threshold must be >= 0.5, got {}",
                self.cascade_threshold
            )));
        }
        if self.latency_cap < 1.0 {
            return Err(TwinError::Config("latency_cap must be >= 1".into()));
        }
        for s in Severity::ALL {
            let f = self.fiber_capacity_factor.get(s);
            if !(0.0..1.0).contains(&f) {
                return Err(TwinError::Config(format!("fiber capacity factor {f} outside [0, 1)")));
            }
            if !(self.overload_cpu_factor.get(s) >= 0.0 && self.spike_multiplier.get(s) > 0.0) {
                return Err(TwinError::Config("severity tables must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Utilization below which the queueing multiplier follows `1/(1-u)`.
pub const QUEUE_KNEE: f64 = 0.95;

/// Queueing latency multiplier for utilization `u`, capped at `cap`.
pub fn queueing_multiplier(u: f64, cap: f64) -> f64 {
    let u = u.max(0.0);
    let m = if u < QUEUE_KNEE {
        1.0 / (1.0 - u)
    } else {
        let gap = 1.0 - QUEUE_KNEE;
        1.0 / gap + (u - QUEUE_KNEE) / (gap * gap)
    };
    m.min(cap)
}

/// Fraction of traffic a link drops at utilization `u`.
pub fn link_loss(u: f64) -> f64 {
    if u > 1.0 {
        (u - 1.0) / u
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub t: f64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub loss_fraction: f64,
    pub max_utilization: f64,
    pub mean_utilization: f64,
    pub impacted_nodes: usize,
    pub offered_mbps: f64,
    pub delivered_mbps: f64,
    pub dropped_mbps: f64,
}

impl KpiSample {
    /// Equality of every field except `t`.
    pub fn same_kpis(&self, other: &KpiSample) -> bool {
        KpiSample { t: 0.0, ..self.clone() }
            == KpiSample {
                t: 0.0,
                ..other.clone()
            }
    }

    pub const CSV_HEADER: &'static str =
        "t,mean_latency_ms,p95_latency_ms,loss_fraction,max_util,mean_util,impacted_nodes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t,
            self.mean_latency_ms,
            self.p95_latency_ms,
            self.loss_fraction,
            self.max_utilization,
            self.mean_utilization,
            self.impacted_nodes
        )
    }
}

/// Time-weighted KPI means over a window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiSummary {
    pub mean_latency_ms: f64,
    pub loss_fraction: f64,
    pub impacted_nodes: f64,
    pub max_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub offered_mbps: f64,
    pub delivered_mbps: f64,
    pub dropped_mbps: f64,
    /// Link ids of the path in effect at the horizon; empty if unroutable.
    pub path: Vec<ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub scenario_id: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub total_routers: usize,
    /// KPIs of the intact network at t = 0.
    pub baseline: KpiSample,
    /// Fixed-interval samples from t = 0 to the horizon.
    pub samples: Vec<KpiSample>,
    /// Piecewise-constant KPI trajectory; each entry holds from its `t` until
    /// the next entry (the last until the horizon).
    pub trajectory: Vec<KpiSample>,
    /// Scenario events as simulated, indices `0..events.len()`.
    pub events: Vec<FailureEvent>,
    /// Induced trips; index `k` here is event `events.len() + k` for the
    /// purpose of `cause` references.
    pub induced_events: Vec<FailureEvent>,
    /// Reroute convergence per scenario event that moved at least one flow.
    pub reroute_convergence: BTreeMap<usize, f64>,
    pub cascade_depth: usize,
    pub per_flow: BTreeMap<ComponentId, FlowOutcome>,
    /// Utilization of up links at the horizon.
    pub link_utilization: BTreeMap<ComponentId, f64>,
    /// Components down at the horizon.
    pub down: Vec<ComponentId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SimulationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn kpi_csv(&self) -> String {
        let mut out = String::from(KpiSample::CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }

    /// Scenario and induced events in one index space.
    pub fn all_events(&self) -> impl Iterator<Item = &FailureEvent> {
        self.events.iter().chain(self.induced_events.iter())
    }

    /// Earliest scenario event timestamp.
    pub fn first_event_time(&self) -> Option<f64> {
        self.events.iter().map(|e| e.timestamp).min_by(f64::total_cmp)
    }

    /// Time-weighted means of the trajectory over `[from, horizon]`. A
    /// zero-length window yields the KPIs in effect at `from`.
    pub fn window_summary(&self, from: f64) -> KpiSummary {
        let end = self.horizon_s;
        let mut acc = KpiSummary::default();
        let mut total = 0.0;
        let mut at_from = self.trajectory.first();
        for (i, seg) in self.trajectory.iter().enumerate() {
            let seg_end = self.trajectory.get(i + 1).map_or(end, |n| n.t).min(end);
            if seg.t <= from {
                at_from = Some(seg);
            }
            let lo = seg.t.max(from);
            let w = seg_end - lo;
            if w > 0.0 {
                total += w;
                acc.mean_latency_ms += w * seg.mean_latency_ms;
                acc.loss_fraction += w * seg.loss_fraction;
                acc.impacted_nodes += w * seg.impacted_nodes as f64;
                acc.max_utilization += w * seg.max_utilization;
            }
        }
        if total > 0.0 {
            KpiSummary {
                mean_latency_ms: acc.mean_latency_ms / total,
                loss_fraction: acc.loss_fraction / total,
                impacted_nodes: acc.impacted_nodes / total,
                max_utilization: acc.max_utilization / total,
            }
        } else {
            let s = at_from.unwrap_or(&self.baseline);
            KpiSummary {
                mean_latency_ms: s.mean_latency_ms,
                loss_fraction: s.loss_fraction,
                impacted_nodes: s.impacted_nodes as f64,
                max_utilization: s.max_utilization,
            }
        }
    }
}


#[cfg(test)]
mod sim_tests;
