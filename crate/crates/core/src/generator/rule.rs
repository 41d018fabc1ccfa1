//! Template-based scenario sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorContext, GeneratorError};
use crate::kgraph::{ComponentId, ComponentKind, KnowledgeGraph};
use crate::scenario::{EventType, FailureEvent, Scenario, ScenarioClass, ScenarioMeta, Severity};
use crate::seed;

/// Multiplier applied to a class's sampling weight per exemplar of that class.
pub const FEEDBACK_BOOST: f64 = 1.5;

const CLASS_STREAM: u64 = 0;
const TEMPLATE_STREAM: u64 = 1;

/// Severity draw weights for low, medium, high.
const SEVERITY_WEIGHTS: [f64; 3] = [0.2, 0.3, 0.5];
const SPIKE_MULTIPLIER: [f64; 3] = [2.0, 5.0, 10.0];

fn weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn severity(rng: &mut ChaCha8Rng) -> Severity {
    Severity::ALL[weighted(rng, &SEVERITY_WEIGHTS)]
}

fn tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Normalized class weights over [`ScenarioClass::ALL`]: uniform, with each
/// exemplar multiplying its class's weight by [`FEEDBACK_BOOST`].
pub fn class_weights(ctx: &GeneratorContext) -> [f64; 4] {
    let mut w = [1.0; 4];
    for ex in &ctx.feedback {
        if let Some(c) = ex.class {
            let i = ScenarioClass::ALL.iter().position(|&k| k == c).expect("known class");
            w[i] *= FEEDBACK_BOOST;
        }
    }
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

/// The context's class, or one drawn from [`class_weights`].
pub fn sample_class(ctx: &GeneratorContext) -> ScenarioClass {
    ctx.constraints.class.unwrap_or_else(|| {
        let mut rng = seed::rng(ctx.seed, &[CLASS_STREAM]);
        ScenarioClass::ALL[weighted(&mut rng, &class_weights(ctx))]
    })
}

fn ids(kg: &KnowledgeGraph, kind: ComponentKind) -> Vec<ComponentId> {
    kg.components_of(kind).map(|c| c.id.clone()).collect()
}

/// Samples a scenario from the class template. A pure function of the
/// context (graph, constraints, feedback and seed).
pub fn propose_rule_based(ctx: &GeneratorContext) -> Result<Scenario, GeneratorError> {
    ctx.check()?;
    if ctx.subgraph.is_empty() {
        return Err(GeneratorError::EmptyGraph);
    }
    let class = sample_class(ctx);
    let mut rng = seed::rng(ctx.seed, &[TEMPLATE_STREAM]);
    let horizon = ctx.constraints.horizon_s;
    let start = tenth(rng.random_range(0.0..=horizon * 0.1));
    let infeasible = |reason: &str| GeneratorError::Infeasible {
        class,
        reason: reason.to_string(),
    };
    let kg = &ctx.subgraph;

    let events = match class {
        ScenarioClass::Fiber => {
            let links = ids(kg, ComponentKind::Link);
            if links.is_empty() {
                return Err(infeasible("graph has no links"));
            }
            let target = pick(&mut rng, &links).clone();
            vec![FailureEvent::new(
                EventType::FiberLinkFailure,
                target,
                start,
                severity(&mut rng),
            )]
        }
        ScenarioClass::Overload => {
            let routers = ids(kg, ComponentKind::Router);
            if routers.is_empty() {
                return Err(infeasible("graph has no routers"));
            }
            let target = pick(&mut rng, &routers).clone();
            vec![FailureEvent::new(
                EventType::RouterOverload,
                target,
                start,
                severity(&mut rng),
            )]
        }
        ScenarioClass::Ddos => {
            let mut flows = ids(kg, ComponentKind::Flow);
            if flows.is_empty() {
                return Err(infeasible("graph has no flows"));
            }
            let n = rng
                .random_range(1..=3usize)
                .min(flows.len())
                .min(ctx.constraints.max_events);
            let mut t = start;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let target = flows.remove(rng.random_range(0..flows.len()));
                let sev = severity(&mut rng);
                let mult = SPIKE_MULTIPLIER[Severity::ALL.iter().position(|&s| s == sev).expect("severity")];
                out.push(
                    FailureEvent::new(EventType::TrafficSpike, target, t, sev).with_param("spike_multiplier", mult),
                );
                t = tenth((t + rng.random_range(0.0..5.0)).min(horizon));
            }
            out
        }
        ScenarioClass::Cascade => cascade(ctx, &mut rng, start).map_err(|r| infeasible(&r))?,
    };

    let mut s = Scenario::new(format!("rule-{:016x}", ctx.seed), events);
    s.meta = ScenarioMeta {
        generator: "rule".into(),
        class: Some(class),
        ..ScenarioMeta::default()
    };
    ctx.ensure_valid(s)
}

/// Marks a target failed; a downed router takes its links with it.
fn mark_failed(kg: &KnowledgeGraph, failed: &mut BTreeSet<ComponentId>, ev: &FailureEvent) {
    failed.insert(ev.target.clone());
    if ev.event_type.downs_router() && kg.kind_of(ev.target.as_str()) == Some(ComponentKind::Router) {
        failed.extend(kg.incident_links(ev.target.as_str()).into_iter().cloned());
    }
}

/// A seed failure followed by trips of dependent components. Each follow-up
/// is drawn from the dependency closure of the most recent event whose
/// closure still holds a healthy router or link, and names it as cause.
/// Without causal conditioning follow-ups are independent draws.
fn cascade(ctx: &GeneratorContext, rng: &mut ChaCha8Rng, start: f64) -> Result<Vec<FailureEvent>, String> {
    let kg = &ctx.subgraph;
    let max = ctx.constraints.max_events;
    if max < 2 {
        return Err("a cascade needs at least 2 events".into());
    }
    let failable = |id: &ComponentId| {
        matches!(
            kg.kind_of(id.as_str()),
            Some(ComponentKind::Link | ComponentKind::Router)
        )
    };
    let pool: Vec<ComponentId> = kg
        .components()
        .map(|c| c.id.clone())
        .filter(|id| failable(id))
        .collect();
    if pool.is_empty() {
        return Err("graph has no routers or links".into());
    }
    let first = pick(rng, &pool).clone();
    let first_type = if kg.kind_of(first.as_str()) == Some(ComponentKind::Router) {
        EventType::NodeFailure
    } else {
        EventType::FiberLinkFailure
    };
    let mut events = vec![FailureEvent::new(first_type, first, start, Severity::High)];
    let mut failed = BTreeSet::new();
    mark_failed(kg, &mut failed, &events[0]);

    let follow_ups = rng.random_range(1..max);
    let mut closures: BTreeMap<usize, Vec<ComponentId>> = BTreeMap::new();
    let mut t = start;
    for _ in 0..follow_ups {
        t = tenth(t + rng.random_range(1.0..20.0));
        if t > ctx.constraints.horizon_s {
            break;
        }
        let choice = if ctx.constraints.causal {
            let mut found = None;
            for j in (0..events.len()).rev() {
                let closure = closures.entry(j).or_insert_with(|| {
                    kg.dependency_closure(events[j].target.as_str())
                        .map(|c| c.into_iter().filter(|id| failable(id)).collect())
                        .unwrap_or_default()
                });
                let open: Vec<&ComponentId> = closure.iter().filter(|id| !failed.contains(*id)).collect();
                if !open.is_empty() {
                    found = Some((open[rng.random_range(0..open.len())].clone(), Some(j)));
                    break;
                }
            }
            found
        } else {
            let open: Vec<&ComponentId> = pool.iter().filter(|id| !failed.contains(*id)).collect();
            (!open.is_empty()).then(|| (open[rng.random_range(0..open.len())].clone(), None))
        };
        let Some((target, cause)) = choice else {
            break;
        };
        let mut ev = FailureEvent::new(EventType::CascadingTrip, target, t, Severity::High);
        ev.cause = cause;
        mark_failed(kg, &mut failed, &ev);
        events.push(ev);
    }
    if events.len() < 2 {
        return Err("no dependent component left to fail".into());
    }
    Ok(events)
}
