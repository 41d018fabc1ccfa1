//! Causal-consistency validation.
//!
//! A scenario is checked event by event, in order, against five rules:
//!
//! * **C1** the target exists and its kind fits the event type;
//! * **C2** timestamps never decrease and every cause precedes its effect;
//! * **C3** an effect's target lies in the dependency closure of its cause's target;
//! * **C4** nothing is failed twice (links of a downed router count as failed);
//! * **C5** the scenario has 1..=max events and every timestamp is within the horizon.
//!
//! Every violation is reported, not only the first.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Scenario, DEFAULT_HORIZON_S, MAX_EVENTS};
use crate::kgraph::{ComponentId, ComponentKind, KnowledgeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Rule statements, as given to generators.
pub const RULES: [(Rule, &str); 5] = [
    (
        Rule::C1,
        "The target must exist in the knowledge graph and match the event type: \
         fiber_link_failure -> Link; router_overload and node_failure -> Router; \
         traffic_spike -> Flow or Router; cascading_trip -> Link or Router.",
    ),
    (
        Rule::C2,
        "Timestamps must be non-decreasing, and an event's cause must be an earlier event \
         whose timestamp is not later than the effect's.",
    ),
    (
        Rule::C3,
        "An event with a cause must target a component inside the dependency closure of \
         the cause's target (reachable through reversed depends_on, routes_over and \
         shares_resource edges, or link/endpoint adjacency).",
    ),
    (
        Rule::C4,
        "A component may be failed at most once; links attached to a router taken down by \
         node_failure or cascading_trip count as already failed. There are no recovery events.",
    ),
    (
        Rule::C5,
        "A scenario has between 1 and max_events events and every timestamp lies in [0, horizon_s].",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub horizon_s: f64,
    pub max_events: usize,
    /// Enforce C3. Disabled for the causal-conditioning ablation.
    pub causal: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            horizon_s: DEFAULT_HORIZON_S,
            max_events: MAX_EVENTS,
            causal: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// `None` for scenario-level findings (event count).
    pub event_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// Lints that do not affect the verdict.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }

    /// Human-readable violation list, one per line.
    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| match v.event_index {
                Some(i) => format!("{} event {i}: {}", v.rule, v.message),
                None => format!("{} scenario: {}", v.rule, v.message),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn validate(s: &Scenario, kg: &KnowledgeGraph) -> ValidationReport {
    validate_with(s, kg, &ValidationOptions::default())
}

pub fn validate_with(s: &Scenario, kg: &KnowledgeGraph, opts: &ValidationOptions) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut push = |rule, event_index, message: String| {
        violations.push(Violation {
            rule,
            event_index,
            message,
        })
    };

    let n = s.events.len();
    if n == 0 || n > opts.max_events {
        push(
            Rule::C5,
            None,
            format!("scenario has {n} events, allowed 1..={}", opts.max_events),
        );
    }

    let mut failed: BTreeSet<ComponentId> = BTreeSet::new();
    for (i, e) in s.events.iter().enumerate() {
        let kind = kg.kind_of(e.target.as_str());
        match kind {
            None => push(Rule::C1, Some(i), format!("target `{}` does not exist", e.target)),
            Some(k) if !e.event_type.accepts(k) => push(
                Rule::C1,
                Some(i),
                format!("{} cannot target {k} `{}`", e.event_type, e.target),
            ),
            Some(_) => {}
        }

        if i > 0 && e.timestamp < s.events[i - 1].timestamp {
            push(
                Rule::C2,
                Some(i),
                format!(
                    "timestamp {} precedes previous event's {}",
                    e.timestamp,
                    s.events[i - 1].timestamp
                ),
            );
        }
        if let Some(c) = e.cause {
            if c >= i {
                push(Rule::C2, Some(i), format!("cause {c} does not precede event {i}"));
            } else {
                let cause = &s.events[c];
                if cause.timestamp > e.timestamp {
                    push(
                        Rule::C2,
                        Some(i),
                        format!(
                            "cause at t={} is later than effect at t={}",
                            cause.timestamp, e.timestamp
                        ),
                    );
                } else if cause.timestamp == e.timestamp {
                    warnings.push(format!("event {i} occurs at the same instant as its cause {c}"));
                }
                if opts.causal {
                    match kg.dependency_closure(cause.target.as_str()) {
                        Ok(closure) if closure.contains(&e.target) => {}
                        Ok(_) => push(
                            Rule::C3,
                            Some(i),
                            format!("`{}` is not reachable from cause target `{}`", e.target, cause.target),
                        ),
                        Err(_) => push(
                            Rule::C3,
                            Some(i),
                            format!("cause target `{}` does not exist", cause.target),
                        ),
                    }
                }
            }
        }

        if failed.contains(&e.target) {
            push(Rule::C4, Some(i), format!("`{}` has already failed", e.target));
        }
        failed.insert(e.target.clone());
        if e.event_type.downs_router() && kind == Some(ComponentKind::Router) {
            failed.extend(kg.incident_links(e.target.as_str()).into_iter().cloned());
        }

        if !(e.timestamp >= 0.0 && e.timestamp <= opts.horizon_s) {
            push(
                Rule::C5,
                Some(i),
                format!("timestamp {} outside [0, {}]", e.timestamp, opts.horizon_s),
            );
        }
    }

    let verdict = if violations.is_empty() {
        Verdict::Valid
    } else {
        Verdict::Invalid
    };
    ValidationReport {
        verdict,
        violations,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{load_topology, TopologyFormat};
    use crate::scenario::{EventType, FailureEvent, Severity};

    fn graph() -> KnowledgeGraph {
        load_topology(b"A B\nB C\nC D\n", TopologyFormat::Edgelist)
            .unwrap()
            .graph
    }

    fn ev(t: EventType, target: &str, ts: f64) -> FailureEvent {
        FailureEvent::new(t, ComponentId::new(target).unwrap(), ts, Severity::High)
    }

    fn rules(r: &ValidationReport) -> Vec<(Rule, Option<usize>)> {
        r.violations.iter().map(|v| (v.rule, v.event_index)).collect()
    }

    #[test]
    fn single_fiber_failure_is_valid() {
        let s = Scenario::new("s", vec![ev(EventType::FiberLinkFailure, "B-C", 245.8)]);
        let r = validate(&s, &graph());
        assert!(r.is_valid(), "{}", r.describe());
    }

    #[test]
    fn kind_mismatch_is_c1() {
        let s = Scenario::new("s", vec![ev(EventType::RouterOverload, "B-C", 1.0)]);
        assert_eq!(rules(&validate(&s, &graph())), vec![(Rule::C1, Some(0))]);
        let s = Scenario::new("s", vec![ev(EventType::NodeFailure, "X", 1.0)]);
        assert_eq!(rules(&validate(&s, &graph())), vec![(Rule::C1, Some(0))]);
    }

    #[test]
    fn reports_every_violation() {
        let s = Scenario::new(
            "s",
            vec![
                ev(EventType::NodeFailure, "B", 10.0),
                ev(EventType::FiberLinkFailure, "A-B", 5.0),
                ev(EventType::NodeFailure, "C", 4000.0),
            ],
        );
        assert_eq!(
            rules(&validate(&s, &graph())),
            vec![(Rule::C2, Some(1)), (Rule::C4, Some(1)), (Rule::C5, Some(2))]
        );
    }

    #[test]
    fn empty_and_oversized_scenarios_fail_c5() {
        let r = validate(&Scenario::new("s", vec![]), &graph());
        assert_eq!(rules(&r), vec![(Rule::C5, None)]);
        let opts = ValidationOptions {
            max_events: 1,
            ..Default::default()
        };
        let s = Scenario::new(
            "s",
            vec![
                ev(EventType::NodeFailure, "A", 1.0),
                ev(EventType::NodeFailure, "D", 2.0),
            ],
        );
        assert_eq!(rules(&validate_with(&s, &graph(), &opts)), vec![(Rule::C5, None)]);
    }

    #[test]
    fn causal_rule_uses_closure_and_can_be_disabled() {
        let kg = load_topology(b"A B\nC D\n", TopologyFormat::Edgelist).unwrap().graph;
        let s = Scenario::new(
            "s",
            vec![
                ev(EventType::FiberLinkFailure, "A-B", 1.0),
                ev(EventType::NodeFailure, "C", 2.0).caused_by(0),
            ],
        );
        assert_eq!(rules(&validate(&s, &kg)), vec![(Rule::C3, Some(1))]);
        let opts = ValidationOptions {
            causal: false,
            ..Default::default()
        };
        assert!(validate_with(&s, &kg, &opts).is_valid());

        let ok = Scenario::new(
            "s",
            vec![
                ev(EventType::FiberLinkFailure, "A-B", 1.0),
                ev(EventType::NodeFailure, "A", 1.0).caused_by(0),
            ],
        );
        let r = validate(&ok, &kg);
        assert!(r.is_valid());
        assert_eq!(r.warnings.len(), 1);
    }
}
