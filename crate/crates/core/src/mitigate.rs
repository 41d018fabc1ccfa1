//! Mitigation planning.
//!
//! Candidate plans are derived from the scenario's failures, each plan is
//! re-simulated with its actions applied at the trigger time, and plans are
//! ranked by effectiveness: the mean relative reduction of loss, excess
//! latency and impacted routers over the window from the trigger to the
//! horizon, each term clamped to `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgraph::{ComponentId, KnowledgeGraph};
use crate::scenario::{EventType, Scenario};
use crate::twin::{self, KpiSummary, SimulationConfig, SimulationResult, TrafficMatrix, TwinError};

/// Largest allowed capacity boost factor.
pub const MAX_BOOST: f64 = 4.0;
/// Boost factor used for generated capacity-boost candidates.
pub const CANDIDATE_BOOST: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MitigateError {
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error("invalid plan `{plan}`: {message}")]
    Plan { plan: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MitigationAction {
    /// Steer flows around these links or routers where an alternative exists.
    Reroute {
        avoid: Vec<ComponentId>,
    },
    CapacityBoost {
        link: ComponentId,
        factor: f64,
    },
    /// Keep flows with priority number at most this value, shed the rest.
    LoadShed {
        keep_max_priority: u8,
    },
    /// Undo these scenario events and everything they induced.
    Rollback {
        events: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationPlan {
    pub id: String,
    pub trigger_s: f64,
    pub actions: Vec<MitigationAction>,
}

impl MitigationPlan {
    pub fn check(&self, scenario: &Scenario) -> Result<(), MitigateError> {
        let err = |message: String| MitigateError::Plan {
            plan: self.id.clone(),
            message,
        };
        if !(self.trigger_s.is_finite() && self.trigger_s >= 0.0) {
            return Err(err(format!("trigger {} must be a non-negative time", self.trigger_s)));
        }
        let first = scenario.events.iter().map(|e| e.timestamp).min_by(f64::total_cmp);
        if let Some(first) = first.filter(|&f| self.trigger_s < f) {
            return Err(err(format!(
                "trigger {} precedes the first failure at {first}",
                self.trigger_s
            )));
        }
        for a in &self.actions {
            match a {
                MitigationAction::Reroute { avoid } if avoid.is_empty() => {
                    return Err(err("reroute needs at least one component to avoid".into()))
                }
                MitigationAction::CapacityBoost { factor, .. } if !(*factor > 1.0 && *factor <= MAX_BOOST) => {
                    return Err(err(format!("boost factor {factor} outside (1, {MAX_BOOST}]")))
                }
                MitigationAction::LoadShed { keep_max_priority } if *keep_max_priority == 0 => {
                    return Err(err("load shedding must keep priority 1".into()))
                }
                MitigationAction::Rollback { events } => {
                    if let Some(i) = events.iter().find(|&&i| i >= scenario.events.len()) {
                        return Err(err(format!("rollback of unknown event {i}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPlan {
    pub plan: MitigationPlan,
    pub effectiveness: f64,
    /// Relative reductions of loss, excess latency and impacted routers.
    pub terms: [f64; 3],
    pub post: KpiSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub scenario_id: String,
    pub trigger_s: f64,
    /// Unmitigated KPIs over the evaluation window.
    pub pre: KpiSummary,
    /// Plans by descending effectiveness; ties keep enumeration order.
    pub ranked: Vec<EvaluatedPlan>,
}

impl MitigationReport {
    pub fn best(&self) -> Option<&EvaluatedPlan> {
        self.ranked.first()
    }

    pub fn best_effectiveness(&self) -> f64 {
        self.best().map_or(0.0, |p| p.effectiveness)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn reduction(pre: f64, post: f64) -> f64 {
    ((pre - post) / pre.max(1e-9)).clamp(0.0, 1.0)
}

/// Effectiveness of a mitigated window against the unmitigated one.
/// Latency counts only in excess of `baseline_latency_ms`.
pub fn effectiveness(pre: &KpiSummary, post: &KpiSummary, baseline_latency_ms: f64) -> (f64, [f64; 3]) {
    let excess = |s: &KpiSummary| (s.mean_latency_ms - baseline_latency_ms).max(0.0);
    let terms = [
        reduction(pre.loss_fraction, post.loss_fraction),
        reduction(excess(pre), excess(post)),
        reduction(pre.impacted_nodes, post.impacted_nodes),
    ];
    (terms.iter().sum::<f64>() / 3.0, terms)
}

/// True when the window shows no degradation against the baseline.
pub fn is_zero_impact(window: &KpiSummary, baseline_latency_ms: f64) -> bool {
    window.loss_fraction <= 1e-12
        && window.impacted_nodes <= 1e-12
        && window.mean_latency_ms <= baseline_latency_ms + 1e-9
}

/// Candidate plans for a simulated scenario, triggered at its first event.
/// At most five plans are produced, in the order below.
///
/// * link or router failures: reroute around the failed components, and
///   boost the most utilized surviving link;
/// * overloads and spikes: shed priority-3 flows, then priority 2 and 3;
/// * always: roll back every scenario event.
///
/// A scenario without impact gets only the rollback plan.
pub fn enumerate_candidates(unmitigated: &SimulationResult) -> Vec<MitigationPlan> {
    let events = &unmitigated.events;
    let Some(trigger) = unmitigated.first_event_time() else {
        return Vec::new();
    };
    let rollback = MitigationPlan {
        id: "rollback".into(),
        trigger_s: trigger,
        actions: vec![MitigationAction::Rollback {
            events: (0..events.len()).collect(),
        }],
    };
    let window = unmitigated.window_summary(trigger);
    if is_zero_impact(&window, unmitigated.baseline.mean_latency_ms) {
        return vec![rollback];
    }

    let mut plans = Vec::new();
    let failed: Vec<ComponentId> = events
        .iter()
        .filter(|e| {
            matches!(
                e.event_type,
                EventType::FiberLinkFailure | EventType::NodeFailure | EventType::CascadingTrip
            )
        })
        .map(|e| e.target.clone())
        .collect();
    if !failed.is_empty() {
        let mut avoid = failed;
        avoid.sort();
        avoid.dedup();
        plans.push(MitigationPlan {
            id: "reroute".into(),
            trigger_s: trigger,
            actions: vec![MitigationAction::Reroute { avoid }],
        });
        let hottest = unmitigated
            .link_utilization
            .iter()
            .filter(|(_, &u)| u > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)));
        if let Some((link, _)) = hottest {
            plans.push(MitigationPlan {
                id: format!("boost:{link}"),
                trigger_s: trigger,
                actions: vec![MitigationAction::CapacityBoost {
                    link: link.clone(),
                    factor: CANDIDATE_BOOST,
                }],
            });
        }
    }
    if events
        .iter()
        .any(|e| matches!(e.event_type, EventType::RouterOverload | EventType::TrafficSpike))
    {
        for keep in [2, 1] {
            plans.push(MitigationPlan {
                id: format!("shed:{keep}"),
                trigger_s: trigger,
                actions: vec![MitigationAction::LoadShed {
                    keep_max_priority: keep,
                }],
            });
        }
    }
    plans.push(rollback);
    plans
}

/// Re-simulates each plan and scores it against `unmitigated`. Plans are
/// evaluated in parallel; the output keeps the input order.
pub fn evaluate_plans(
    scenario: &Scenario,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    cfg: &SimulationConfig,
    plans: &[MitigationPlan],
    unmitigated: &SimulationResult,
) -> Result<Vec<EvaluatedPlan>, MitigateError> {
    for p in plans {
        p.check(scenario)?;
    }
    let base_lat = unmitigated.baseline.mean_latency_ms;
    plans
        .par_iter()
        .map(|plan| {
            let res = twin::run_with_plan(scenario, kg, traffic, cfg, Some(plan))?;
            let pre = unmitigated.window_summary(plan.trigger_s);
            let post = res.window_summary(plan.trigger_s);
            let (effectiveness, terms) = effectiveness(&pre, &post, base_lat);
            Ok(EvaluatedPlan {
                plan: plan.clone(),
                effectiveness,
                terms,
                post,
            })
        })
        .collect()
}

/// Enumerates, evaluates and ranks mitigation plans for a scenario.
pub fn mitigate(
    scenario: &Scenario,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    cfg: &SimulationConfig,
    unmitigated: &SimulationResult,
) -> Result<MitigationReport, MitigateError> {
    let plans = enumerate_candidates(unmitigated);
    let trigger = unmitigated.first_event_time().unwrap_or(0.0);
    let mut ranked = evaluate_plans(scenario, kg, traffic, cfg, &plans, unmitigated)?;
    ranked.sort_by(|a, b| b.effectiveness.total_cmp(&a.effectiveness));
    Ok(MitigationReport {
        scenario_id: scenario.id.clone(),
        trigger_s: trigger,
        pre: unmitigated.window_summary(trigger),
        ranked,
    })
}
