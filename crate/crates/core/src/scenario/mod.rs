//! Failure-event schema and scenarios.
//!
//! Events are JSON objects with four required keys:
//!
//! ```json
//! {"event_type": "fiber_link_failure", "target": "B-C", "timestamp": 245.8, "severity": "high"}
//! ```
//!
//! plus an optional `cause` (index of an earlier event in the same
//! scenario) and free-form `params`. Unknown top-level keys are kept in
//! `params`, so nothing a producer emits is silently lost.

mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::kgraph::{ComponentId, ComponentKind};

pub use validate::{validate, validate_with, Rule, ValidationOptions, ValidationReport, Verdict, Violation, RULES};

/// Hard cap on events per scenario.
pub const MAX_EVENTS: usize = 64;
/// Default scenario horizon in seconds.
pub const DEFAULT_HORIZON_S: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("ordering error: {0}")]
    Ordering(String),
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    FiberLinkFailure,
    RouterOverload,
    NodeFailure,
    TrafficSpike,
    CascadingTrip,
}

impl EventType {
    pub const ALL: [EventType; 5] = [
        EventType::FiberLinkFailure,
        EventType::RouterOverload,
        EventType::NodeFailure,
        EventType::TrafficSpike,
        EventType::CascadingTrip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::FiberLinkFailure => "fiber_link_failure",
            EventType::RouterOverload => "router_overload",
            EventType::NodeFailure => "node_failure",
            EventType::TrafficSpike => "traffic_spike",
            EventType::CascadingTrip => "cascading_trip",
        }
    }

    /// Whether this event type may target a component of `kind`.
    pub fn accepts(self, kind: ComponentKind) -> bool {
        use ComponentKind::*;
        match self {
            EventType::FiberLinkFailure => kind == Link,
            EventType::RouterOverload | EventType::NodeFailure => kind == Router,
            EventType::TrafficSpike => matches!(kind, Flow | Router),
            EventType::CascadingTrip => matches!(kind, Link | Router),
        }
    }

    /// Event types that take a router (and with it, its links) down.
    pub fn downs_router(self) -> bool {
        matches!(self, EventType::NodeFailure | EventType::CascadingTrip)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event_type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Low, Severity::Medium, Severity::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        }
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Severity::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown severity `{s}`"))
    }
}

/// Evaluation scenario classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioClass {
    Fiber,
    Overload,
    Cascade,
    Ddos,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 4] = [
        ScenarioClass::Cascade,
        ScenarioClass::Ddos,
        ScenarioClass::Fiber,
        ScenarioClass::Overload,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioClass::Fiber => "fiber",
            ScenarioClass::Overload => "overload",
            ScenarioClass::Cascade => "cascade",
            ScenarioClass::Ddos => "ddos",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioClass::Fiber => "fiber link failure",
            ScenarioClass::Overload => "router overload",
            ScenarioClass::Cascade => "multi-node cascading outage",
            ScenarioClass::Ddos => "DDoS-style traffic spike",
        }
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown scenario class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureEvent {
    pub event_type: EventType,
    pub target: ComponentId,
    pub timestamp: f64,
    pub severity: Severity,
    pub cause: Option<usize>,
    pub params: BTreeMap<String, Value>,
}

impl FailureEvent {
    pub fn new(event_type: EventType, target: ComponentId, timestamp: f64, severity: Severity) -> Self {
        FailureEvent {
            event_type,
            target,
            timestamp,
            severity,
            cause: None,
            params: BTreeMap::new(),
        }
    }

    pub fn caused_by(mut self, cause: usize) -> Self {
        self.cause = Some(cause);
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Numeric parameter, if present and numeric.
    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }
}

const EVENT_KEYS: [&str; 6] = ["event_type", "target", "timestamp", "severity", "cause", "params"];

/// Decodes one event object. Link targets are canonicalized.
pub fn parse_event(doc: &Value) -> Result<FailureEvent, ScenarioError> {
    parse_event_at(doc, "")
}

fn parse_event_at(doc: &Value, prefix: &str) -> Result<FailureEvent, ScenarioError> {
    let field = |name: &str| format!("{prefix}{name}");
    let obj = doc
        .as_object()
        .ok_or_else(|| schema(field("<event>"), "expected a JSON object"))?;
    let get_str = |name: &str| -> Result<&str, ScenarioError> {
        match obj.get(name) {
            None => Err(schema(field(name), "missing required field")),
            Some(Value::String(s)) => Ok(s.as_str()),
            Some(_) => Err(schema(field(name), "expected a string")),
        }
    };
    let event_type = get_str("event_type")?
        .parse::<EventType>()
        .map_err(|m| schema(field("event_type"), m))?;
    let raw_target = get_str("target")?;
    let target = ComponentId::new(raw_target)
        .map(|id| ComponentId::canonical(id.as_str()))
        .map_err(|e| schema(field("target"), e.to_string()))?;
    let timestamp = match obj.get("timestamp") {
        None => return Err(schema(field("timestamp"), "missing required field")),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| schema(field("timestamp"), "expected a number"))?,
    };
    if !timestamp.is_finite() || timestamp < 0.0 {
        return Err(schema(
            field("timestamp"),
            format!("must be non-negative, got {timestamp}"),
        ));
    }
    let severity = get_str("severity")?
        .parse::<Severity>()
        .map_err(|m| schema(field("severity"), m))?;
    let cause = match obj.get("cause") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|c| usize::try_from(c).ok())
                .ok_or_else(|| schema(field("cause"), "expected a non-negative integer"))?,
        ),
    };
    let mut params = BTreeMap::new();
    match obj.get("params") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            params.extend(m.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Some(_) => return Err(schema(field("params"), "expected an object")),
    }
    for (k, v) in obj {
        if !EVENT_KEYS.contains(&k.as_str()) {
            params.insert(k.clone(), v.clone());
        }
    }
    Ok(FailureEvent {
        event_type,
        target,
        timestamp,
        severity,
        cause,
        params,
    })
}

/// Encodes an event with keys in the fixed order `event_type, target,
/// timestamp, severity, cause, params`; absent optional keys are omitted.
pub fn serialize_event(ev: &FailureEvent) -> Value {
    let mut m = Map::new();
    m.insert("event_type".into(), Value::from(ev.event_type.as_str()));
    m.insert("target".into(), Value::from(ev.target.as_str()));
    m.insert(
        "timestamp".into(),
        serde_json::Number::from_f64(ev.timestamp).map_or(Value::Null, Value::Number),
    );
    m.insert("severity".into(), Value::from(ev.severity.as_str()));
    if let Some(c) = ev.cause {
        m.insert("cause".into(), Value::from(c));
    }
    if !ev.params.is_empty() {
        let p: Map<String, Value> = ev.params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        m.insert("params".into(), Value::Object(p));
    }
    Value::Object(m)
}

impl Serialize for FailureEvent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_event(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FailureEvent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        parse_event(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default)]
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ScenarioClass>,
    /// Remote calls spent producing the scenario (completion backend only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn default_generator() -> String {
    "manual".to_string()
}

impl Default for ScenarioMeta {
    fn default() -> Self {
        ScenarioMeta {
            generator: default_generator(),
            iteration: 0,
            class: None,
            attempts: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub meta: ScenarioMeta,
    pub events: Vec<FailureEvent>,
}

impl Scenario {
    pub fn new(id: impl Into<String>, events: Vec<FailureEvent>) -> Self {
        Scenario {
            id: id.into(),
            meta: ScenarioMeta::default(),
            events,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Distinct targets in event order.
    pub fn targets(&self) -> Vec<&ComponentId> {
        let mut out: Vec<&ComponentId> = Vec::new();
        for e in &self.events {
            if !out.contains(&&e.target) {
                out.push(&e.target);
            }
        }
        out
    }

    /// Longest cause chain counted in links: an event without a cause has
    /// depth 0.
    pub fn cause_depth(&self) -> usize {
        cause_depth(&self.events)
    }
}

/// Longest chain of `cause` links over an event list (0 when no event has
/// a cause). Causes that do not point backwards are ignored.
pub fn cause_depth(events: &[FailureEvent]) -> usize {
    let mut depth = vec![0usize; events.len()];
    for (i, e) in events.iter().enumerate() {
        if let Some(c) = e.cause.filter(|&c| c < i) {
            depth[i] = depth[c] + 1;
        }
    }
    depth.into_iter().max().unwrap_or(0)
}

/// Decodes a scenario document `{ "id", "meta", "events": [...] }`.
pub fn parse_scenario(bytes: &[u8]) -> Result<Scenario, ScenarioError> {
    let v: Value = serde_json::from_slice(bytes)
        .map_err(|e| schema("<document>", format!("line {} column {}: {e}", e.line(), e.column())))?;
    scenario_from_value(&v)
}

pub fn scenario_from_value(v: &Value) -> Result<Scenario, ScenarioError> {
    let obj = v
        .as_object()
        .ok_or_else(|| schema("<document>", "expected a JSON object"))?;
    let id = match obj.get("id") {
        None | Some(Value::Null) => "scenario".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    let meta = match obj.get("meta") {
        None | Some(Value::Null) => ScenarioMeta::default(),
        Some(m) => serde_json::from_value(m.clone()).map_err(|e| schema("meta", e.to_string()))?,
    };
    let events = obj
        .get("events")
        .ok_or_else(|| schema("events", "missing required field"))?
        .as_array()
        .ok_or_else(|| schema("events", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, e)| parse_event_at(e, &format!("events[{i}].")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scenario { id, meta, events })
}

/// Decodes newline-delimited scenarios; blank lines are skipped.
pub fn parse_scenario_stream(bytes: &[u8]) -> Result<Vec<Scenario>, ScenarioError> {
    let text = std::str::from_utf8(bytes).map_err(|e| schema("<document>", e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            parse_scenario(l.as_bytes()).map_err(|e| match e {
                ScenarioError::Schema { field, message } => schema(format!("line {}: {field}", n + 1), message),
                other => other,
            })
        })
        .collect()
}

/// Stable-sorts events by timestamp and remaps `cause` indices to the new
/// positions. Fails if a cause ends up at or after its effect.
pub fn canonicalize(s: &Scenario) -> Result<Scenario, ScenarioError> {
    let n = s.events.len();
    for (i, e) in s.events.iter().enumerate() {
        if let Some(c) = e.cause {
            if c >= n {
                return Err(ScenarioError::Ordering(format!("event {i} cause {c} is out of range")));
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.events[a].timestamp.total_cmp(&s.events[b].timestamp).then(a.cmp(&b)));
    let mut new_pos = vec![0usize; n];
    for (pos, &old) in order.iter().enumerate() {
        new_pos[old] = pos;
    }
    let mut events = Vec::with_capacity(n);
    for (pos, &old) in order.iter().enumerate() {
        let mut e = s.events[old].clone();
        if let Some(c) = e.cause {
            let mapped = new_pos[c];
            if mapped >= pos {
                return Err(ScenarioError::Ordering(format!(
                    "event {old} (t={}) is caused by event {c} (t={}), which does not precede it",
                    s.events[old].timestamp, s.events[c].timestamp
                )));
            }
            e.cause = Some(mapped);
        }
        events.push(e);
    }
    Ok(Scenario {
        id: s.id.clone(),
        meta: s.meta.clone(),
        events,
    })
}
