//! Settings from a JSON config file with flat dotted keys.
//!
//! Keys mirror the command-line flags (`seed`, `iterations`, `ablate`, ...)
//! plus dotted keys into nested sections: `twin.horizon_s`,
//! `twin.fiber_capacity_factor.high`, `weights.loss`, `llm.endpoint`,
//! `llm.api_key_env`. Relative paths resolve against the config file's
//! directory. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use faultloop::campaign::{Ablations, GeneratorKind, ImpactWeights, LoopConfig};
use faultloop::generator::LlmConfig;
use faultloop::scenario::ScenarioClass;
use faultloop::twin::SimulationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Ablate {
    Kg,
    Causal,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub topology: Option<PathBuf>,
    pub services: Option<PathBuf>,
    pub traffic: Option<PathBuf>,
    pub incidents: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub generator: GeneratorKind,
    pub class: Option<ScenarioClass>,
    pub iterations: u32,
    pub ablate: Vec<Ablate>,
    pub ablation_suite: bool,
    pub k: usize,
    pub max_events: usize,
    pub weights: ImpactWeights,
    pub twin: SimulationConfig,
    pub llm: LlmConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let lc = LoopConfig::default();
        Settings {
            topology: None,
            services: None,
            traffic: None,
            incidents: None,
            out: None,
            seed: lc.seed,
            generator: lc.generator,
            class: lc.class,
            iterations: lc.iterations,
            ablate: Vec::new(),
            ablation_suite: false,
            k: lc.k,
            max_events: lc.max_events,
            weights: lc.weights,
            twin: lc.sim,
            llm: LlmConfig::default(),
        }
    }
}

impl Settings {
    /// Defaults overlaid with the dotted keys of a config document.
    pub fn from_json(text: &str) -> Result<Settings> {
        let doc: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(keys) = doc else {
            bail!("config must be a JSON object of dotted keys");
        };
        let mut tree = serde_json::to_value(Settings::default()).expect("settings serialize");
        for (key, value) in keys {
            set_dotted(&mut tree, &key, value)?;
        }
        serde_json::from_value(tree).context("config value has the wrong type")
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut s = Settings::from_json(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut s.topology,
            &mut s.services,
            &mut s.traffic,
            &mut s.incidents,
            &mut s.out,
        ] {
            if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(s)
    }

    pub fn ablations(&self) -> Ablations {
        Ablations {
            disable_kg: self.ablate.contains(&Ablate::Kg),
            disable_causal: self.ablate.contains(&Ablate::Causal),
            disable_feedback: self.ablate.contains(&Ablate::Feedback),
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            iterations: self.iterations,
            k: self.k,
            generator: self.generator,
            ablations: self.ablations(),
            weights: self.weights,
            seed: self.seed,
            class: self.class,
            max_events: self.max_events,
            sim: SimulationConfig {
                seed: self.seed,
                ..self.twin.clone()
            },
        }
    }

    /// Input paths that are set but do not exist.
    pub fn missing_inputs(&self) -> Vec<&Path> {
        [&self.topology, &self.services, &self.traffic, &self.incidents]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .filter(|p| !p.exists())
            .collect()
    }
}

fn set_dotted(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("config key `{key}`: `{}` is not a section", parts[..i].join(".")))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}
