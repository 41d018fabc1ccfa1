//! Prompt rendering for the completion backend.

use std::fmt::Write;

use super::GeneratorContext;
use crate::scenario::{EventType, RULES};

/// The reference event shown to the model.
pub const SCHEMA_EXAMPLE: &str =
    r#"{"event_type":"fiber_link_failure","target":"B-C","timestamp":245.8,"severity":"high"}"#;

/// Deterministic prompt: graph, rules, schema, constraints and exemplars.
pub fn render_prompt(ctx: &GeneratorContext) -> String {
    let c = &ctx.constraints;
    let mut p = String::new();
    p.push_str(
        "You generate failure scenarios for a network digital twin. \
         Every event must refer to components of the knowledge graph below.\n\n",
    );

    p.push_str("## Knowledge graph\n");
    p.push_str(&ctx.subgraph.to_canonical_json());
    p.push_str("\n\n## Rules\n");
    for (rule, text) in RULES {
        let _ = writeln!(p, "{rule}: {text}");
    }

    p.push_str("\n## Event schema\n");
    let types: Vec<&str> = EventType::ALL.iter().map(|t| t.as_str()).collect();
    let _ = writeln!(
        p,
        "Each event is a JSON object with fields event_type (one of {}), target (component id), \
         timestamp (seconds from scenario start), severity (low, medium or high), optional cause \
         (index of the earlier event that triggered it) and optional params (object).",
        types.join(", ")
    );
    let _ = writeln!(p, "Example event:\n{SCHEMA_EXAMPLE}");
    p.push_str("Answer with a single ```json fenced block holding {\"events\": [ ... ]} and nothing else.\n");

    p.push_str("\n## Constraints\n");
    match c.class {
        Some(class) => {
            let _ = writeln!(p, "class: {class} ({})", class.description());
        }
        None => p.push_str("class: any\n"),
    }
    let _ = writeln!(p, "max_events: {}", c.max_events);
    let _ = writeln!(p, "horizon_s: {}", c.horizon_s);
    let _ = writeln!(
        p,
        "cause links: {}",
        if c.causal {
            "must follow dependencies (rule C3)"
        } else {
            "not checked"
        }
    );

    if !ctx.feedback.is_empty() {
        p.push_str("\n## High-impact scenarios so far\n");
        let mut ex: Vec<_> = ctx.feedback.iter().collect();
        ex.sort_by(|a, b| b.impact.total_cmp(&a.impact));
        for (i, e) in ex.iter().enumerate() {
            let _ = writeln!(p, "{}. impact {:.4}: {}", i + 1, e.impact, e.scenario_digest);
        }
        p.push_str("Propose a different scenario likely to cause at least as much impact.\n");
    }
    p
}

/// The prompt followed by the previous answer's violations.
pub fn render_repair_prompt(ctx: &GeneratorContext, problem: &str) -> String {
    let mut p = render_prompt(ctx);
    p.push_str("\n## Your previous answer was rejected\n");
    p.push_str(problem);
    p.push_str("\nReturn a corrected scenario.\n");
    p
}
