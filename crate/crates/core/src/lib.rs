//! Closed-loop adversarial failure analysis for network topologies.
//!
//! The crate is organised as a pipeline:
//!
//! * [`kgraph`] builds a typed dependency graph (routers, links, flows,
//!   services, shared resources) from topology files and service specs.
//! * [`scenario`] defines the failure-event schema and the causal
//!   consistency rules C1 to C5 that every scenario must satisfy.
//! * [`generator`] proposes scenarios via rule templates, incident replay or
//!   a remote completion service with a validate-and-repair loop.
//! * [`twin`] executes scenarios in a deterministic event-driven simulation
//!   and records KPI time series.
//! * [`mitigate`] enumerates recovery plans and scores them by re-simulation.
//! * [`campaign`] closes the loop: generate, simulate, mitigate, score and
//!   feed the highest-impact scenarios back into generation.

pub mod campaign;
pub mod generator;
pub mod kgraph;
pub mod mitigate;
pub mod scenario;
pub mod seed;
pub mod twin;

pub use campaign::{run_ablation_suite, run_campaign, CampaignReport, LoopConfig};
pub use generator::{Backend, GeneratorContext};
pub use kgraph::{ComponentId, KnowledgeGraph};
pub use mitigate::{mitigate, MitigationPlan, MitigationReport};
pub use scenario::{validate, Scenario, ValidationReport};
pub use twin::{run, SimulationConfig, SimulationResult, TrafficMatrix};
