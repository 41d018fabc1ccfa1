//! Completion-service backend with validate-and-repair.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::{render_prompt, render_repair_prompt};
use super::{classify, propose_rule_based, GeneratorContext, GeneratorError};
use crate::scenario::{parse_event, FailureEvent, Scenario, ScenarioMeta};

/// Remote calls allowed per proposal.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Response(String),
}

/// A text completion service.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Chat-completion endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_s: f64,
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: None,
            timeout_s: 30.0,
            max_in_flight: 2,
        }
    }
}

/// Blocking chat-completion client over HTTP.
pub struct HttpClient {
    cfg: LlmConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
}

impl HttpClient {
    pub fn new(cfg: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .build()
            .into();
        HttpClient {
            cfg,
            agent,
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let cap = self.cfg.max_in_flight.max(1);
        let mut n = self.in_flight.lock().expect("in-flight lock");
        while *n >= cap {
            n = self.slot_free.wait(n).expect("in-flight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock") -= 1;
        self.slot_free.notify_one();
    }

    fn post(&self, prompt: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let key = self
            .cfg
            .api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok());
        debug!(
            "POST {} (authorization: {}) {}",
            self.cfg.endpoint,
            if key.is_some() { "Bearer <redacted>" } else { "none" },
            body
        );
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(k) = &key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => LlmError::Status(code),
            other => LlmError::Transport(other.to_string()),
        })?;
        let doc: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Response(e.to_string()))?;
        debug!("response {doc}");
        doc.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Response("missing choices[0].message.content".into()))
    }
}

impl CompletionClient for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.acquire();
        let out = self.post(prompt);
        self.release();
        out
    }
}

/// Offline client that replays a fixed transcript and records prompts.
pub struct ScriptedClient {
    replies: Mutex<VecDeque<Result<String, LlmError>>>,
    prompts: Mutex<Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new(replies: Vec<Result<String, LlmError>>) -> Self {
        ScriptedClient {
            replies: Mutex::new(replies.into()),
            prompts: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())).collect())
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log").clone()
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().expect("prompt log").push(prompt.to_string());
        self.replies
            .lock()
            .expect("script")
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into())))
    }
}

/// First balanced JSON object or array in `text`, skipping brackets inside
/// strings.
fn balanced(text: &str) -> Option<&str> {
    let start = text.find(['{', '['])?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn fenced(text: &str) -> Option<&str> {
    let open = text
        .find("```json")
        .map(|i| i + 7)
        .or_else(|| text.find("```").map(|i| i + 3))?;
    let rest = &text[open..];
    let close = rest.find("```")?;
    Some(rest[..close].trim())
}

/// Events of the first JSON scenario in a completion: a fenced block if
/// present, else the first balanced JSON value. Accepts `{"events": [...]}`,
/// a bare array of events, or a single event.
pub fn extract_events(text: &str) -> Result<Vec<FailureEvent>, String> {
    let candidate = fenced(text)
        .or_else(|| balanced(text))
        .ok_or_else(|| "no JSON block found".to_string())?;
    let doc: Value = serde_json::from_str(candidate).map_err(|e| format!("invalid JSON: {e}"))?;
    let items: Vec<&Value> = match &doc {
        Value::Object(m) if m.contains_key("events") => m["events"]
            .as_array()
            .ok_or_else(|| "`events` is not an array".to_string())?
            .iter()
            .collect(),
        Value::Object(_) => vec![&doc],
        Value::Array(a) => a.iter().collect(),
        _ => return Err("expected an object or array".into()),
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| parse_event(v).map_err(|e| format!("event {i}: {e}")))
        .collect()
}

/// Prompts the client, validates the answer and re-prompts with the
/// violations, spending at most [`MAX_ATTEMPTS`] calls. Unusable answers and
/// transport failures count as attempts. When every attempt fails the
/// rule-based backend answers instead, tagged `rule_fallback`.
pub fn propose_llm(ctx: &GeneratorContext, client: &dyn CompletionClient) -> Result<Scenario, GeneratorError> {
    ctx.check()?;
    let mut prompt = render_prompt(ctx);
    let mut notes = Vec::new();
    for attempt in 1..=MAX_ATTEMPTS {
        let reply = match client.complete(&prompt) {
            Ok(r) => r,
            Err(e) => {
                warn!("completion attempt {attempt} failed: {e}");
                notes.push(format!("attempt {attempt}: {e}"));
                continue;
            }
        };
        let events = match extract_events(&reply) {
            Ok(ev) => ev,
            Err(why) => {
                notes.push(format!("attempt {attempt}: {why}"));
                prompt = render_repair_prompt(ctx, &format!("The answer could not be read: {why}"));
                continue;
            }
        };
        let mut s = Scenario::new(format!("llm-{:016x}", ctx.seed), events);
        let report = ctx.validate(&s);
        if report.is_valid() {
            s.meta = ScenarioMeta {
                generator: "llm".into(),
                class: ctx.constraints.class.or_else(|| classify(&s)),
                attempts: Some(attempt),
                notes,
                ..ScenarioMeta::default()
            };
            return Ok(s);
        }
        let problems = report.describe();
        notes.push(format!("attempt {attempt}: {} violation(s)", report.violations.len()));
        prompt = render_repair_prompt(ctx, &problems);
    }
    let mut s = propose_rule_based(ctx)?;
    s.meta.generator = "rule_fallback".into();
    s.meta.attempts = Some(MAX_ATTEMPTS);
    notes.push("completion attempts exhausted".into());
    s.meta.notes = notes;
    Ok(s)
}
