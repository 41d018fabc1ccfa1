//! Closed-loop campaigns.
//!
//! Each iteration generates a scenario, validates it against the full
//! graph, simulates it, evaluates mitigations, scores its impact and offers
//! it to an elitist feedback store whose contents steer later generation.
//! Ablation switches remove the knowledge graph, causal conditioning or
//! feedback; [`run_ablation_suite`] runs all four variants on matched seeds.

mod report;

use std::str::FromStr;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{Backend, Constraints, FeedbackExemplar, GeneratorContext};
use crate::kgraph::{ComponentId, KnowledgeGraph};
use crate::mitigate::{self, MitigateError, MitigationReport};
use crate::scenario::{validate_with, Scenario, ScenarioClass, ValidationReport};
use crate::seed;
use crate::twin::{self, KpiSample, KpiSummary, SimulationConfig, SimulationResult, TrafficMatrix, TwinError};

pub use report::{ablation_csv, iterations_csv, plot_csv, summary_text};

/// Proposals allowed per iteration before it is skipped.
pub const MAX_PROPOSALS: u32 = 3;
/// Cascade depth at which the depth term of the impact score saturates.
pub const DEPTH_CAP: f64 = 4.0;
/// Latency increase, in multiples of baseline latency, that saturates the
/// latency term.
pub const LATENCY_SCALE: f64 = 4.0;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Mitigate(#[from] MitigateError),
    #[error("every proposal of every iteration failed; last error: {0}")]
    NothingGenerated(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Rule,
    Replay,
    Llm,
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(GeneratorKind::Rule),
            "replay" => Ok(GeneratorKind::Replay),
            "llm" => Ok(GeneratorKind::Llm),
            _ => Err(format!("unknown generator `{s}` (expected rule, replay or llm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Generate against an id-only graph.
    pub disable_kg: bool,
    /// Drop rule C3 and cause links.
    pub disable_causal: bool,
    /// Give the generator no exemplars.
    pub disable_feedback: bool,
}

impl Ablations {
    pub fn label(&self) -> &'static str {
        match (self.disable_kg, self.disable_causal, self.disable_feedback) {
            (false, false, false) => "full",
            (true, false, false) => "no_kg",
            (false, true, false) => "no_causal",
            (false, false, true) => "no_feedback",
            _ => "custom",
        }
    }
}

/// Impact weights for latency, loss, impacted routers and cascade depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactWeights {
    pub latency: f64,
    pub loss: f64,
    pub impacted: f64,
    pub depth: f64,
}

impl Default for ImpactWeights {
    fn default() -> Self {
        ImpactWeights {
            latency: 0.25,
            loss: 0.25,
            impacted: 0.25,
            depth: 0.25,
        }
    }
}

impl ImpactWeights {
    pub fn check(&self) -> Result<(), CampaignError> {
        let w = [self.latency, self.loss, self.impacted, self.depth];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CampaignError::Config("impact weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CampaignError::Config(format!(
                "impact weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub iterations: u32,
    /// Feedback store capacity.
    pub k: usize,
    pub generator: GeneratorKind,
    pub ablations: Ablations,
    pub weights: ImpactWeights,
    pub seed: u64,
    /// Fixed scenario class; `None` lets the generator choose.
    pub class: Option<ScenarioClass>,
    pub max_events: usize,
    pub sim: SimulationConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            iterations: 20,
            k: 5,
            generator: GeneratorKind::Rule,
            ablations: Ablations::default(),
            weights: ImpactWeights::default(),
            seed: 0,
            class: None,
            max_events: 8,
            sim: SimulationConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn check(&self) -> Result<(), CampaignError> {
        if self.iterations == 0 {
            return Err(CampaignError::Config("iterations must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(CampaignError::Config("feedback store size k must be >= 1".into()));
        }
        self.weights.check()?;
        self.sim.check()?;
        Ok(())
    }

    fn constraints(&self) -> Constraints {
        Constraints {
            class: self.class,
            max_events: self.max_events,
            horizon_s: self.sim.horizon_s,
            causal: !self.ablations.disable_causal,
        }
    }
}

/// Impact of a simulated scenario in `[0, 1]`, from KPI means over the
/// window from the first event to the horizon:
/// `w1 * clamp(dlatency / (4 * baseline latency)) + w2 * loss
///  + w3 * impacted / routers + w4 * min(depth / 4, 1)`.
pub fn impact_score(result: &SimulationResult, weights: &ImpactWeights) -> f64 {
    let from = result.first_event_time().unwrap_or(0.0);
    impact_from(
        &result.window_summary(from),
        result.baseline.mean_latency_ms,
        result.total_routers,
        result.cascade_depth,
        weights,
    )
}

/// The impact formula over already aggregated KPIs.
pub fn impact_from(
    window: &KpiSummary,
    baseline_latency_ms: f64,
    total_routers: usize,
    cascade_depth: usize,
    weights: &ImpactWeights,
) -> f64 {
    let dlat = window.mean_latency_ms - baseline_latency_ms;
    let latency = if baseline_latency_ms > 0.0 {
        (dlat / (LATENCY_SCALE * baseline_latency_ms)).clamp(0.0, 1.0)
    } else if dlat > 0.0 {
        1.0
    } else {
        0.0
    };
    let impacted = if total_routers > 0 {
        (window.impacted_nodes / total_routers as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let depth = (cascade_depth as f64 / DEPTH_CAP).min(1.0);
    let score = weights.latency * latency
        + weights.loss * window.loss_fraction.clamp(0.0, 1.0)
        + weights.impacted * impacted
        + weights.depth * depth;
    score.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub iteration: u32,
    pub impact: f64,
    pub exemplar: FeedbackExemplar,
}

/// Top-k scenarios by impact; ties keep the earlier iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStore {
    k: usize,
    entries: Vec<StoreEntry>,
}

impl FeedbackStore {
    pub fn new(k: usize) -> Self {
        FeedbackStore { k, entries: Vec::new() }
    }

    pub fn insert(&mut self, entry: StoreEntry) {
        let pos = self
            .entries
            .iter()
            .position(|e| entry.impact > e.impact || (entry.impact == e.impact && entry.iteration < e.iteration))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, entry);
        self.entries.truncate(self.k);
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn exemplars(&self) -> Vec<FeedbackExemplar> {
        self.entries.iter().map(|e| e.exemplar.clone()).collect()
    }

    pub fn max_impact(&self) -> Option<f64> {
        self.entries.first().map(|e| e.impact)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What a campaign keeps of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub cascade_depth: usize,
    pub induced_events: usize,
    pub baseline: KpiSample,
    /// KPI means from the first event to the horizon.
    pub window: KpiSummary,
    pub reroute_convergence_ms: Vec<f64>,
    pub down: Vec<ComponentId>,
}

impl SimulationSummary {
    pub fn of(r: &SimulationResult) -> Self {
        SimulationSummary {
            cascade_depth: r.cascade_depth,
            induced_events: r.induced_events.len(),
            baseline: r.baseline.clone(),
            window: r.window_summary(r.first_event_time().unwrap_or(0.0)),
            reroute_convergence_ms: r.reroute_convergence.values().copied().collect(),
            down: r.down.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    /// Seed of the accepted (or last) proposal.
    pub seed: u64,
    pub proposals: u32,
    pub valid_proposals: u32,
    /// `None` when every proposal failed.
    pub scenario: Option<Scenario>,
    pub validation: Option<ValidationReport>,
    pub simulation: Option<SimulationSummary>,
    pub mitigation: Option<MitigationReport>,
    pub impact: f64,
    /// Highest impact in the feedback store after this iteration.
    pub running_max: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl IterationRecord {
    pub fn skipped(&self) -> bool {
        self.scenario.is_none()
    }

    pub fn effectiveness(&self) -> Option<f64> {
        self.mitigation.as_ref().map(|m| m.best_effectiveness())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub generator: String,
    pub variant: String,
    pub seed: u64,
    pub config: LoopConfig,
    pub validity_rate: f64,
    pub mean_impact: f64,
    pub max_impact: f64,
    pub mean_cascade_depth: f64,
    pub mean_effectiveness: f64,
    pub skipped: u32,
    pub records: Vec<IterationRecord>,
    pub store: FeedbackStore,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs one campaign.
pub fn run_campaign(
    cfg: &LoopConfig,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    backend: &Backend,
) -> Result<CampaignReport, CampaignError> {
    cfg.check()?;
    traffic.check_against(kg)?;
    let sim = SimulationConfig {
        seed: cfg.seed,
        ..cfg.sim.clone()
    };
    let gen_graph = if cfg.ablations.disable_kg {
        kg.id_only()
    } else {
        kg.clone()
    };
    let constraints = cfg.constraints();
    let opts = constraints.validation_options();
    let mut store = FeedbackStore::new(cfg.k);
    let mut records = Vec::with_capacity(cfg.iterations as usize);
    let mut last_error = String::new();

    for it in 1..=cfg.iterations {
        let feedback = if cfg.ablations.disable_feedback {
            Vec::new()
        } else {
            store.exemplars()
        };
        let mut rec = IterationRecord {
            iteration: it,
            seed: 0,
            proposals: 0,
            valid_proposals: 0,
            scenario: None,
            validation: None,
            simulation: None,
            mitigation: None,
            impact: 0.0,
            running_max: 0.0,
            errors: Vec::new(),
        };
        for attempt in 0..MAX_PROPOSALS {
            let s = seed::derive(cfg.seed, &[u64::from(it), u64::from(attempt)]);
            rec.seed = s;
            rec.proposals += 1;
            let ctx = GeneratorContext {
                subgraph: gen_graph.clone(),
                constraints: constraints.clone(),
                feedback: feedback.clone(),
                seed: s,
            };
            match backend.propose(&ctx) {
                Ok(mut scenario) => {
                    let report = validate_with(&scenario, kg, &opts);
                    if report.is_valid() {
                        rec.valid_proposals += 1;
                        scenario.meta.iteration = it;
                        rec.scenario = Some(scenario);
                        rec.validation = Some(report);
                        break;
                    }
                    let msg = format!("proposal {attempt} invalid: {}", report.describe());
                    debug!("iteration {it}: {msg}");
                    last_error = msg.clone();
                    rec.errors.push(msg);
                }
                Err(e) => {
                    debug!("iteration {it}: proposal {attempt} failed: {e}");
                    last_error = e.to_string();
                    rec.errors.push(format!("proposal {attempt} failed: {e}"));
                }
            }
        }

        if let Some(scenario) = &rec.scenario {
            let result = twin::run(scenario, kg, traffic, &sim)?;
            let mitigation = mitigate::mitigate(scenario, kg, traffic, &sim, &result)?;
            let impact = impact_score(&result, &cfg.weights);
            store.insert(StoreEntry {
                iteration: it,
                impact,
                exemplar: FeedbackExemplar::from_scenario(scenario, result.cascade_depth, impact),
            });
            rec.impact = impact;
            rec.simulation = Some(SimulationSummary::of(&result));
            rec.mitigation = Some(mitigation);
            info!(
                "iteration {it}: {} events, depth {}, impact {impact:.4}",
                scenario.events.len(),
                result.cascade_depth
            );
        } else {
            info!("iteration {it}: skipped");
        }
        rec.running_max = store.max_impact().unwrap_or(0.0);
        records.push(rec);
    }

    let done: Vec<&IterationRecord> = records.iter().filter(|r| !r.skipped()).collect();
    if done.is_empty() {
        return Err(CampaignError::NothingGenerated(last_error));
    }
    let proposals: u32 = records.iter().map(|r| r.proposals).sum();
    let valid: u32 = records.iter().map(|r| r.valid_proposals).sum();
    Ok(CampaignReport {
        generator: backend.name().to_string(),
        variant: cfg.ablations.label().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        validity_rate: f64::from(valid) / f64::from(proposals.max(1)),
        mean_impact: mean(done.iter().map(|r| r.impact)),
        max_impact: done.iter().map(|r| r.impact).fold(0.0, f64::max),
        mean_cascade_depth: mean(
            done.iter()
                .filter_map(|r| r.simulation.as_ref())
                .map(|s| s.cascade_depth as f64),
        ),
        mean_effectiveness: mean(done.iter().filter_map(|r| r.effectiveness())),
        skipped: records.len() as u32 - done.len() as u32,
        records,
        store,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub mean_impact: f64,
    /// Mean impact relative to the full variant (1.0 for full).
    pub normalized: f64,
    pub mean_cascade_depth: f64,
    pub validity_rate: f64,
    pub mean_effectiveness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
    pub campaigns: Vec<CampaignReport>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The four suite variants: full, no_kg, no_causal, no_feedback.
pub fn ablation_variants() -> [Ablations; 4] {
    [
        Ablations::default(),
        Ablations {
            disable_kg: true,
            ..Ablations::default()
        },
        Ablations {
            disable_causal: true,
            ..Ablations::default()
        },
        Ablations {
            disable_feedback: true,
            ..Ablations::default()
        },
    ]
}

/// Runs the four variants with the same seed. Variants run in parallel
/// unless the backend is a completion client, whose transcript order
/// must stay deterministic.
pub fn run_ablation_suite(
    cfg: &LoopConfig,
    kg: &KnowledgeGraph,
    traffic: &TrafficMatrix,
    backend: &Backend,
) -> Result<AblationReport, CampaignError> {
    let configs: Vec<LoopConfig> = ablation_variants()
        .into_iter()
        .map(|ablations| LoopConfig {
            ablations,
            ..cfg.clone()
        })
        .collect();
    let campaigns: Vec<CampaignReport> = if matches!(backend, Backend::Llm(_)) {
        configs
            .iter()
            .map(|c| run_campaign(c, kg, traffic, backend))
            .collect::<Result<_, _>>()?
    } else {
        configs
            .par_iter()
            .map(|c| run_campaign(c, kg, traffic, backend))
            .collect::<Result<_, _>>()?
    };
    let full = campaigns[0].mean_impact;
    let rows = campaigns
        .iter()
        .map(|c| AblationRow {
            variant: c.variant.clone(),
            seed: c.seed,
            mean_impact: c.mean_impact,
            normalized: if c.variant == "full" || full <= 0.0 {
                if c.variant == "full" {
                    1.0
                } else {
                    0.0
                }
            } else {
                c.mean_impact / full
            },
            mean_cascade_depth: c.mean_cascade_depth,
            validity_rate: c.validity_rate,
            mean_effectiveness: c.mean_effectiveness,
        })
        .collect();
    Ok(AblationReport {
        seed: cfg.seed,
        rows,
        campaigns,
    })
}
