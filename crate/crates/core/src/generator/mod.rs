//! Scenario generation backends.
//!
//! Three interchangeable backends produce [`Scenario`]s for a
//! [`GeneratorContext`]:
//!
//! * [`propose_rule_based`]: class templates sampled from the graph;
//! * [`propose_replay`]: historical incidents replayed round-robin;
//! * [`propose_llm`]: a completion service prompted with the graph, the
//!   validation rules and high-impact exemplars, with a validate-and-repair
//!   loop and a rule-based fallback.
//!
//! Every backend validates its output before returning it.

mod llm;
mod prompt;
mod replay;
mod rule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgraph::{IncidentRecord, KnowledgeGraph};
use crate::scenario::{
    validate_with, EventType, Scenario, ScenarioClass, ScenarioError, ValidationOptions, ValidationReport,
    DEFAULT_HORIZON_S, MAX_EVENTS,
};

pub use llm::{
    extract_events, propose_llm, CompletionClient, HttpClient, LlmConfig, LlmError, ScriptedClient, MAX_ATTEMPTS,
};
pub use prompt::{render_prompt, render_repair_prompt, SCHEMA_EXAMPLE};
pub use replay::propose_replay;
pub use rule::{class_weights, propose_rule_based, sample_class, FEEDBACK_BOOST};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("scenario class `{class}` is infeasible: {reason}")]
    Infeasible { class: ScenarioClass, reason: String },
    #[error("no component can take a {0} event")]
    NoTarget(EventType),
    #[error("empty subgraph")]
    EmptyGraph,
    #[error("incident log is empty")]
    EmptyLog,
    #[error("incident {index}: {source}")]
    Incident {
        index: usize,
        #[source]
        source: ScenarioError,
    },
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("generated scenario failed validation:\n{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Scenario class; `None` samples one per proposal.
    pub class: Option<ScenarioClass>,
    pub max_events: usize,
    pub horizon_s: f64,
    /// Require cause links to follow dependencies (rule C3). Disabled for the
    /// causal-conditioning ablation.
    pub causal: bool,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            class: None,
            max_events: 8,
            horizon_s: DEFAULT_HORIZON_S,
            causal: true,
        }
    }
}

impl Constraints {
    pub fn validation_options(&self) -> ValidationOptions {
        ValidationOptions {
            horizon_s: self.horizon_s,
            max_events: self.max_events,
            causal: self.causal,
        }
    }
}

/// A past scenario and the impact it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackExemplar {
    pub scenario_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ScenarioClass>,
    pub impact: f64,
}

impl FeedbackExemplar {
    pub fn from_scenario(s: &Scenario, cascade_depth: usize, impact: f64) -> Self {
        FeedbackExemplar {
            scenario_digest: digest(s, cascade_depth),
            class: s.meta.class,
            impact: impact.clamp(0.0, 1.0),
        }
    }
}

/// Class a scenario most resembles: any cause link makes a cascade, spikes
/// make a DDoS, and otherwise the first event decides.
pub fn classify(s: &Scenario) -> Option<ScenarioClass> {
    let first = s.events.first()?;
    if s.events.iter().any(|e| e.cause.is_some()) {
        return Some(ScenarioClass::Cascade);
    }
    Some(match first.event_type {
        EventType::TrafficSpike => ScenarioClass::Ddos,
        EventType::RouterOverload => ScenarioClass::Overload,
        EventType::FiberLinkFailure => ScenarioClass::Fiber,
        EventType::NodeFailure | EventType::CascadingTrip if s.events.len() > 1 => ScenarioClass::Cascade,
        EventType::NodeFailure | EventType::CascadingTrip => ScenarioClass::Fiber,
    })
}

/// Short description: class, targets in order and cascade depth.
pub fn digest(s: &Scenario, cascade_depth: usize) -> String {
    let class = s.meta.class.map_or("unspecified", |c| c.as_str());
    let targets: Vec<&str> = s.events.iter().map(|e| e.target.as_str()).collect();
    format!("class={class} targets={} depth={cascade_depth}", targets.join(","))
}

#[derive(Debug, Clone)]
pub struct GeneratorContext {
    pub subgraph: KnowledgeGraph,
    pub constraints: Constraints,
    /// Exemplars in descending impact order.
    pub feedback: Vec<FeedbackExemplar>,
    pub seed: u64,
}

impl GeneratorContext {
    pub fn new(subgraph: KnowledgeGraph, seed: u64) -> Self {
        GeneratorContext {
            subgraph,
            constraints: Constraints::default(),
            feedback: Vec::new(),
            seed,
        }
    }

    pub fn with_class(mut self, class: ScenarioClass) -> Self {
        self.constraints.class = Some(class);
        self
    }

    pub fn check(&self) -> Result<(), GeneratorError> {
        let c = &self.constraints;
        if c.max_events == 0 || c.max_events > MAX_EVENTS {
            return Err(GeneratorError::Constraint(format!(
                "max_events must be 1..={MAX_EVENTS}, got {}",
                c.max_events
            )));
        }
        if !(c.horizon_s.is_finite() && c.horizon_s > 0.0) {
            return Err(GeneratorError::Constraint("horizon_s must be positive".into()));
        }
        if self.feedback.iter().any(|f| !(0.0..=1.0).contains(&f.impact)) {
            return Err(GeneratorError::Constraint("exemplar impact outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn validate(&self, s: &Scenario) -> ValidationReport {
        validate_with(s, &self.subgraph, &self.constraints.validation_options())
    }

    fn ensure_valid(&self, s: Scenario) -> Result<Scenario, GeneratorError> {
        let report = self.validate(&s);
        if report.is_valid() {
            Ok(s)
        } else {
            Err(GeneratorError::Invalid(report.describe()))
        }
    }
}

/// A generation backend.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    Rule,
    Replay(&'a [IncidentRecord]),
    Llm(&'a dyn CompletionClient),
}

impl Backend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Rule => "rule",
            Backend::Replay(_) => "replay",
            Backend::Llm(_) => "llm",
        }
    }

    pub fn propose(&self, ctx: &GeneratorContext) -> Result<Scenario, GeneratorError> {
        match self {
            Backend::Rule => propose_rule_based(ctx),
            Backend::Replay(log) => propose_replay(log, ctx),
            Backend::Llm(client) => propose_llm(ctx, *client),
        }
    }
}
