//! Historical incident replay.

use super::{GeneratorContext, GeneratorError};
use crate::kgraph::{ComponentId, ComponentKind, IncidentRecord};
use crate::scenario::{EventType, FailureEvent, Scenario, ScenarioError, ScenarioMeta, Severity};

/// Kind a replayed target is remapped to when the recorded one is unusable.
fn preferred_kind(t: EventType) -> ComponentKind {
    match t {
        EventType::FiberLinkFailure | EventType::CascadingTrip => ComponentKind::Link,
        EventType::RouterOverload | EventType::NodeFailure => ComponentKind::Router,
        EventType::TrafficSpike => ComponentKind::Flow,
    }
}

/// Replays incident `seed mod len` as a one-event scenario at t = 0.
/// Targets missing from the subgraph, or of a kind the event cannot hit,
/// are remapped to the lexicographically smallest component of the right
/// kind and the remap is noted in the scenario metadata.
pub fn propose_replay(log: &[IncidentRecord], ctx: &GeneratorContext) -> Result<Scenario, GeneratorError> {
    ctx.check()?;
    if log.is_empty() {
        return Err(GeneratorError::EmptyLog);
    }
    let index = (ctx.seed % log.len() as u64) as usize;
    let rec = &log[index];
    let bad = |source: ScenarioError| GeneratorError::Incident { index, source };
    let event_type: EventType = rec.event_type.parse().map_err(|message| {
        bad(ScenarioError::Schema {
            field: "event_type".into(),
            message,
        })
    })?;
    let severity = match &rec.severity {
        Some(s) => s.parse().map_err(|message| {
            bad(ScenarioError::Schema {
                field: "severity".into(),
                message,
            })
        })?,
        None => Severity::High,
    };

    let kg = &ctx.subgraph;
    let mut notes = vec![format!("replay of incident {index}")];
    let fits = kg.kind_of(&rec.target).is_some_and(|k| event_type.accepts(k));
    let target = if fits {
        ComponentId::canonical(&rec.target)
    } else {
        let mut kinds = vec![preferred_kind(event_type)];
        if event_type == EventType::TrafficSpike {
            kinds.push(ComponentKind::Router);
        }
        let remapped = kinds
            .into_iter()
            .find_map(|k| kg.components_of(k).next())
            .map(|c| c.id.clone())
            .ok_or(GeneratorError::NoTarget(event_type))?;
        notes.push(format!("target `{}` remapped to `{remapped}`", rec.target));
        remapped
    };

    let mut s = Scenario::new(
        format!("replay-{index}"),
        vec![FailureEvent::new(event_type, target, 0.0, severity)],
    );
    s.meta = ScenarioMeta {
        generator: "replay".into(),
        notes,
        ..ScenarioMeta::default()
    };
    ctx.ensure_valid(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{load_topology, TopologyFormat};

    fn rec(t: &str, target: &str) -> IncidentRecord {
        IncidentRecord {
            event_type: t.into(),
            target: target.into(),
            date: String::new(),
            note: String::new(),
            severity: None,
        }
    }

    fn ctx(seed: u64) -> GeneratorContext {
        let kg = load_topology(b"A B\nB C\n", TopologyFormat::Edgelist).unwrap().graph;
        GeneratorContext::new(kg, seed)
    }

    #[test]
    fn direct_replay() {
        let s = propose_replay(&[rec("fiber_link_failure", "B-C")], &ctx(5)).unwrap();
        assert_eq!(s.events.len(), 1);
        let e = &s.events[0];
        assert_eq!(
            (e.event_type, e.target.as_str(), e.timestamp),
            (EventType::FiberLinkFailure, "B-C", 0.0)
        );
        assert_eq!(s.meta.generator, "replay");
    }

    #[test]
    fn absent_router_is_remapped_to_smallest() {
        let s = propose_replay(&[rec("node_failure", "Z")], &ctx(0)).unwrap();
        assert_eq!(s.events[0].target.as_str(), "A");
        assert!(s.meta.notes.iter().any(|n| n.contains("remapped")));
    }

    #[test]
    fn round_robin_by_seed() {
        let log = [rec("fiber_link_failure", "A-B"), rec("fiber_link_failure", "B-C")];
        let a = propose_replay(&log, &ctx(0)).unwrap();
        let b = propose_replay(&log, &ctx(1)).unwrap();
        assert_ne!(a.events[0].target, b.events[0].target);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(propose_replay(&[], &ctx(0)), Err(GeneratorError::EmptyLog)));
    }
}
