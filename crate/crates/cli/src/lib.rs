//! Command-line front end: argument parsing, input loading and report
//! emission. Exit codes: 0 success, 1 operational error, 2 invalid input
//! or invalid scenario.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use faultloop::campaign::{
    ablation_csv, iterations_csv, plot_csv, run_ablation_suite, run_campaign, summary_text, GeneratorKind,
};
use faultloop::generator::{Backend, GeneratorContext, HttpClient};
use faultloop::kgraph::{
    load_topology, parse_incident_log, parse_service_spec, ComponentKind, IncidentRecord, IngestWarning,
    KnowledgeGraph, ServiceSpec, TopologyFormat,
};
use faultloop::mitigate::mitigate;
use faultloop::scenario::{scenario_from_value, validate_with, Scenario, ScenarioClass, ValidationOptions};
use faultloop::twin::{self, TrafficMatrix};

use config::{Ablate, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "faultloop",
    version,
    about = "Closed-loop failure scenario generation and mitigation scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Default, clap::Args)]
pub struct Opts {
    /// JSON config file with flat dotted keys; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Topology file: GraphML (.graphml, .xml), canonical graph JSON (.json)
    /// or an edgelist (anything else).
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,
    /// Traffic matrix CSV: flow_id,src,dst,demand_mbps,priority.
    #[arg(long, global = true)]
    pub traffic: Option<PathBuf>,
    /// Service spec JSON with flows, services and shared resources.
    #[arg(long, global = true)]
    pub services: Option<PathBuf>,
    /// Incident log, one JSON record per line.
    #[arg(long, global = true)]
    pub incidents: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub generator: Option<GeneratorArg>,
    #[arg(long, global = true, value_enum)]
    pub class: Option<ClassArg>,
    #[arg(long, global = true)]
    pub iterations: Option<u32>,
    /// Disable a framework component; repeatable.
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<Ablate>,
    /// Run the four matched-seed ablation variants.
    #[arg(long, global = true)]
    pub ablation_suite: bool,
    /// Output directory; without it results go to standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Report format for `validate`.
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    /// More logging; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load topology and services, emit the canonical graph and statistics.
    Ingest,
    /// Check a scenario against the causal consistency rules.
    Validate { scenario: PathBuf },
    /// Emit one scenario from the chosen generator.
    Generate,
    /// Run a scenario through the twin, emit the result and KPI series.
    Simulate { scenario: PathBuf },
    /// Rank mitigation plans for a scenario.
    Mitigate { scenario: PathBuf },
    /// Run the closed loop, or the ablation suite with --ablation-suite.
    Campaign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Rule,
    Replay,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Fiber,
    Overload,
    Cascade,
    Ddos,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Operational(anyhow::Error),
    Invalid(anyhow::Error),
    /// Scenario failed validation; the report has already been printed.
    Rejected,
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Operational(_) => EXIT_OPERATIONAL,
            Failure::Invalid(_) | Failure::Rejected => EXIT_INVALID,
        }
    }
}

trait OrFail<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn operational(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn operational(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Operational(e.into()))
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_OPERATIONAL,
            };
        }
    };
    init_logging(cli.opts.verbose);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Operational(e) | Failure::Invalid(e) => eprintln!("error: {e:#}"),
                Failure::Rejected => {}
            }
            f.code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Config file values overridden by flags.
pub fn settings(opts: &Opts) -> Result<Settings, Failure> {
    let mut s = match &opts.config {
        Some(path) => Settings::load(path).invalid()?,
        None => Settings::default(),
    };
    let paths = [
        (&opts.topology, &mut s.topology),
        (&opts.traffic, &mut s.traffic),
        (&opts.services, &mut s.services),
        (&opts.incidents, &mut s.incidents),
        (&opts.out, &mut s.out),
    ];
    for (flag, slot) in paths {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    if let Some(g) = opts.generator {
        s.generator = match g {
            GeneratorArg::Rule => GeneratorKind::Rule,
            GeneratorArg::Replay => GeneratorKind::Replay,
            GeneratorArg::Llm => GeneratorKind::Llm,
        };
    }
    if let Some(c) = opts.class {
        s.class = Some(match c {
            ClassArg::Fiber => ScenarioClass::Fiber,
            ClassArg::Overload => ScenarioClass::Overload,
            ClassArg::Cascade => ScenarioClass::Cascade,
            ClassArg::Ddos => ScenarioClass::Ddos,
        });
    }
    if let Some(n) = opts.iterations {
        s.iterations = n;
    }
    if !opts.ablate.is_empty() {
        s.ablate.clone_from(&opts.ablate);
    }
    s.ablation_suite |= opts.ablation_suite;
    if let Some(e) = &opts.llm_endpoint {
        s.llm.endpoint.clone_from(e);
    }
    if let Some(m) = &opts.llm_model {
        s.llm.model.clone_from(m);
    }
    if let Some(p) = s.missing_inputs().first() {
        return Err(Failure::Invalid(anyhow!("input file {} does not exist", p.display())));
    }
    Ok(s)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let s = settings(&cli.opts)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&s),
        Command::Validate { scenario } => cmd_validate(&s, scenario, cli.opts.format),
        Command::Generate => cmd_generate(&s),
        Command::Simulate { scenario } => cmd_simulate(&s, scenario),
        Command::Mitigate { scenario } => cmd_mitigate(&s, scenario),
        Command::Campaign => cmd_campaign(&s),
    }
}

/// The loaded inputs of a run.
pub struct Inputs {
    pub kg: KnowledgeGraph,
    pub traffic: TrafficMatrix,
    pub warnings: Vec<IngestWarning>,
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .invalid()
}

fn topology_format(path: &Path) -> Option<TopologyFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("json") => None,
        Some("graphml" | "xml") => Some(TopologyFormat::Graphml),
        _ => Some(TopologyFormat::Edgelist),
    }
}

/// Loads topology, services, traffic and incidents. Traffic flows missing
/// from the service spec are added to the graph so events can target them;
/// without a traffic file the graph's flows are the traffic.
pub fn load_inputs(s: &Settings) -> Result<Inputs, Failure> {
    let path = s
        .topology
        .as_deref()
        .ok_or_else(|| Failure::Invalid(anyhow!("--topology is required")))?;
    let bytes = read(path)?;
    let (topo, warnings) = match topology_format(path) {
        Some(format) => {
            let ingest = load_topology(&bytes, format)
                .with_context(|| format!("topology {}", path.display()))
                .invalid()?;
            (ingest.graph, ingest.warnings)
        }
        None => (
            KnowledgeGraph::from_canonical_json(&bytes)
                .with_context(|| format!("topology {}", path.display()))
                .invalid()?,
            Vec::new(),
        ),
    };
    let mut spec = match &s.services {
        Some(p) => parse_service_spec(&read(p)?)
            .with_context(|| format!("services {}", p.display()))
            .invalid()?,
        None => ServiceSpec::default(),
    };
    let traffic = match &s.traffic {
        Some(p) => Some(
            TrafficMatrix::parse_csv(&read(p)?)
                .with_context(|| format!("traffic {}", p.display()))
                .invalid()?,
        ),
        None => None,
    };
    if let Some(t) = &traffic {
        for f in t.to_service_spec().flows {
            if !spec.flows.iter().any(|x| x.id == f.id) && !topo.contains(&f.id) {
                spec.flows.push(f);
            }
        }
    }
    let mut kg = topo.build_service_layer(&spec).invalid()?;
    if let Some(p) = &s.incidents {
        let log = parse_incident_log(&read(p)?)
            .with_context(|| format!("incidents {}", p.display()))
            .invalid()?;
        kg = kg.with_incidents(log);
    }
    let traffic = traffic.unwrap_or_else(|| TrafficMatrix::from_graph(&kg));
    traffic.check_against(&kg).invalid()?;
    info!(
        "loaded {} routers, {} links, {} flows",
        kg.count(ComponentKind::Router),
        kg.count(ComponentKind::Link),
        traffic.flows.len()
    );
    Ok(Inputs { kg, traffic, warnings })
}

/// Reads a scenario document, a bare event object or an array of events.
pub fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let bytes = read(path)?;
    let v: Value = serde_json::from_slice(&bytes)
        .with_context(|| format!("scenario {} is not valid JSON", path.display()))
        .invalid()?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let doc = match v {
        Value::Array(events) => json!({ "id": stem, "events": events }),
        Value::Object(ref o) if o.contains_key("event_type") => json!({ "id": stem, "events": [v] }),
        other => other,
    };
    scenario_from_value(&doc)
        .with_context(|| format!("scenario {}", path.display()))
        .invalid()
}

fn validation_options(s: &Settings) -> ValidationOptions {
    ValidationOptions {
        horizon_s: s.twin.horizon_s,
        causal: !s.ablate.contains(&Ablate::Causal),
        ..ValidationOptions::default()
    }
}

/// Prints to standard output; a closed pipe is not an error.
fn print_out(content: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(content.as_bytes());
    if !content.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
    let _ = out.flush();
}

/// Writes `name` under the output directory, or prints it when there is
/// none and `stdout` is set.
fn emit(s: &Settings, name: &str, content: &str, stdout: bool) -> Result<(), Failure> {
    match &s.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .operational()?;
            let path = dir.join(name);
            let mut text = content.to_string();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            fs::write(&path, text)
                .with_context(|| format!("cannot write {}", path.display()))
                .operational()?;
            info!("wrote {}", path.display());
        }
        None if stdout => print_out(content),
        None => {}
    }
    Ok(())
}

fn cmd_ingest(s: &Settings) -> Result<(), Failure> {
    let inp = load_inputs(s)?;
    let kg = &inp.kg;
    let disconnected = inp
        .warnings
        .iter()
        .find_map(|w| match w {
            IngestWarning::Disconnected { components } => Some(components.len()),
            _ => None,
        })
        .unwrap_or(1);
    let stats = json!({
        "routers": kg.count(ComponentKind::Router),
        "links": kg.count(ComponentKind::Link),
        "flows": kg.count(ComponentKind::Flow),
        "services": kg.count(ComponentKind::Service),
        "resources": kg.count(ComponentKind::Resource),
        "edges": kg.edge_count(),
        "incidents": kg.incidents().len(),
        "connected_components": disconnected,
        "warnings": inp.warnings,
    });
    let stats = serde_json::to_string_pretty(&stats).expect("stats serialize");
    emit(s, "graph.json", &kg.to_canonical_json(), true)?;
    if s.out.is_some() {
        emit(s, "stats.json", &stats, false)?;
    } else {
        eprintln!("{stats}");
    }
    Ok(())
}

fn cmd_validate(s: &Settings, path: &Path, format: Format) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let inp = load_inputs(s)?;
    let report = validate_with(&scenario, &inp.kg, &validation_options(s));
    match format {
        Format::Json => print_out(&serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "verdict: {}", if report.is_valid() { "valid" } else { "invalid" });
            if !report.violations.is_empty() {
                let _ = writeln!(out, "{}", report.describe());
            }
            for w in &report.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
            print_out(&out);
        }
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Rejected)
    }
}

fn require_valid(s: &Settings, scenario: &Scenario, kg: &KnowledgeGraph) -> Result<(), Failure> {
    let report = validate_with(scenario, kg, &validation_options(s));
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Invalid(anyhow!(
            "scenario `{}` is invalid:\n{}",
            scenario.id,
            report.describe()
        )))
    }
}

/// Keeps the backend and whatever it borrows alive together.
struct BackendHolder {
    incidents: Vec<IncidentRecord>,
    http: Option<HttpClient>,
    kind: GeneratorKind,
}

impl BackendHolder {
    fn new(s: &Settings, kg: &KnowledgeGraph) -> Self {
        // The HTTP client exists only when explicitly requested.
        let http = (s.generator == GeneratorKind::Llm).then(|| HttpClient::new(s.llm.clone()));
        BackendHolder {
            incidents: kg.incidents().to_vec(),
            http,
            kind: s.generator,
        }
    }

    fn backend(&self) -> Backend<'_> {
        match self.kind {
            GeneratorKind::Rule => Backend::Rule,
            GeneratorKind::Replay => Backend::Replay(&self.incidents),
            GeneratorKind::Llm => Backend::Llm(self.http.as_ref().expect("client built for llm")),
        }
    }
}

fn cmd_generate(s: &Settings) -> Result<(), Failure> {
    let inp = load_inputs(s)?;
    let lc = s.loop_config();
    lc.check().invalid()?;
    let holder = BackendHolder::new(s, &inp.kg);
    let subgraph = if lc.ablations.disable_kg {
        inp.kg.id_only()
    } else {
        inp.kg.clone()
    };
    let mut ctx = GeneratorContext::new(subgraph, s.seed);
    ctx.constraints.class = s.class;
    ctx.constraints.max_events = s.max_events;
    ctx.constraints.horizon_s = s.twin.horizon_s;
    ctx.constraints.causal = !lc.ablations.disable_causal;
    let scenario = holder.backend().propose(&ctx).operational()?;
    emit(s, "scenario.json", &scenario.to_json(), true)
}

fn cmd_simulate(s: &Settings, path: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let inp = load_inputs(s)?;
    require_valid(s, &scenario, &inp.kg)?;
    let cfg = s.loop_config().sim;
    cfg.check().invalid()?;
    let result = twin::run(&scenario, &inp.kg, &inp.traffic, &cfg).invalid()?;
    emit(s, "result.json", &result.to_json(), true)?;
    emit(s, "kpi.csv", &result.kpi_csv(), false)
}

fn cmd_mitigate(s: &Settings, path: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let inp = load_inputs(s)?;
    require_valid(s, &scenario, &inp.kg)?;
    let cfg = s.loop_config().sim;
    cfg.check().invalid()?;
    let result = twin::run(&scenario, &inp.kg, &inp.traffic, &cfg).invalid()?;
    let report = mitigate(&scenario, &inp.kg, &inp.traffic, &cfg, &result).operational()?;
    emit(s, "mitigation.json", &report.to_json(), true)
}

fn cmd_campaign(s: &Settings) -> Result<(), Failure> {
    let inp = load_inputs(s)?;
    let lc = s.loop_config();
    lc.check().invalid()?;
    let holder = BackendHolder::new(s, &inp.kg);
    let backend = holder.backend();
    let out_default = Settings {
        out: Some(s.out.clone().unwrap_or_else(|| PathBuf::from("faultloop-out"))),
        ..s.clone()
    };
    let s = &out_default;
    if s.ablation_suite {
        let suite = run_ablation_suite(&lc, &inp.kg, &inp.traffic, &backend).operational()?;
        let full = &suite.campaigns[0];
        emit(s, "campaign.json", &suite.to_json(), false)?;
        emit(s, "iterations.csv", &iterations_csv(full), false)?;
        emit(s, "plot.csv", &plot_csv(full), false)?;
        emit(s, "ablation.csv", &ablation_csv(&suite), false)?;
        let summary = summary_text(full, Some(&suite));
        emit(s, "summary.txt", &summary, false)?;
        print_out(&summary);
    } else {
        let report = run_campaign(&lc, &inp.kg, &inp.traffic, &backend).operational()?;
        emit(s, "campaign.json", &report.to_json(), false)?;
        emit(s, "iterations.csv", &iterations_csv(&report), false)?;
        emit(s, "plot.csv", &plot_csv(&report), false)?;
        let summary = summary_text(&report, None);
        emit(s, "summary.txt", &summary, false)?;
        print_out(&summary);
    }
    Ok(())
}
