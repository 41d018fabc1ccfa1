use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn faultloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faultloop"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn topo() -> String {
    fixture("triangle.edges").display().to_string()
}

fn traffic() -> String {
    fixture("traffic.csv").display().to_string()
}

#[test]
fn validate_reference_event_is_valid() {
    let o = faultloop(&[
        "validate",
        fixture("fiber_cut.json").to_str().unwrap(),
        "--topology",
        &topo(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("verdict: valid"));
}

#[test]
fn validate_unknown_target_exits_2_with_c1() {
    let o = faultloop(&[
        "validate",
        fixture("missing.json").to_str().unwrap(),
        "--topology",
        &topo(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("verdict: invalid"));
    assert!(out.contains("C1 event 0"), "{out}");
    let o = faultloop(&[
        "validate",
        fixture("missing.json").to_str().unwrap(),
        "--topology",
        &topo(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "invalid");
    assert_eq!(v["violations"][0]["rule"], "C1");
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let o = faultloop(&["explode"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(faultloop(&[]).status.code(), Some(1));
    assert_eq!(faultloop(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_and_bad_scenarios_exit_2() {
    let o = faultloop(&["ingest", "--topology", "/nonexistent/topo.edges"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = faultloop(&["simulate", bad.to_str().unwrap(), "--topology", &topo()]);
    assert_eq!(o.status.code(), Some(2));
    let o = faultloop(&[
        "simulate",
        fixture("missing.json").to_str().unwrap(),
        "--topology",
        &topo(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("C1"));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = faultloop(&[
            "simulate",
            fixture("fiber_cut.json").to_str().unwrap(),
            "--topology",
            &topo(),
            "--traffic",
            &traffic(),
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push((
            fs::read(out.join("result.json")).unwrap(),
            fs::read(out.join("kpi.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let result: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(result["seed"], 5);
    assert!(String::from_utf8_lossy(&outputs[0].1).starts_with("t,"));
}

#[test]
fn mitigate_ranks_plans() {
    let o = faultloop(&[
        "mitigate",
        fixture("fiber_cut.json").to_str().unwrap(),
        "--topology",
        &topo(),
        "--traffic",
        &traffic(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ranked = v["ranked"].as_array().unwrap();
    assert!(!ranked.is_empty());
    let eff: Vec<f64> = ranked.iter().map(|p| p["effectiveness"].as_f64().unwrap()).collect();
    assert!(eff.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn one_iteration_campaign_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = faultloop(&[
        "campaign",
        "--topology",
        &topo(),
        "--traffic",
        &traffic(),
        "--iterations",
        "1",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let iters = fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert_eq!(iters.lines().count(), 2);
    assert_eq!(
        fs::read_to_string(out.join("plot.csv"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        "iteration,impact,cascade_depth,effectiveness"
    );
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("campaign seed 42"));
    assert!(summary.contains("validity rate"));
    assert!(!out.join("ablation.csv").exists());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("campaign.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
}

#[test]
fn ablation_suite_has_four_rows_and_full_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("suite");
    let o = faultloop(&[
        "campaign",
        "--topology",
        &topo(),
        "--traffic",
        &traffic(),
        "--iterations",
        "3",
        "--ablation-suite",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("full,0,"));
    assert_eq!(rows[0].split(',').nth(3), Some("1.000000"));
    let variants: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["full", "no_kg", "no_causal", "no_feedback"]);
}

#[test]
fn campaigns_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["x", "y"] {
        let out = dir.path().join(run);
        let o = faultloop(&[
            "campaign",
            "--topology",
            &topo(),
            "--traffic",
            &traffic(),
            "--iterations",
            "4",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files.push(
            ["campaign.json", "iterations.csv", "plot.csv", "summary.txt"].map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixture("triangle.edges"), dir.path().join("t.edges")).unwrap();
    fs::copy(fixture("traffic.csv"), dir.path().join("tm.csv")).unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"topology": "t.edges", "traffic": "tm.csv", "seed": 3, "iterations": 2,
            "twin.horizon_s": 300, "out": "results"}"#,
    )
    .unwrap();
    let o = faultloop(&["campaign", "--config", cfg.to_str().unwrap(), "--iterations", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("results");
    assert_eq!(
        fs::read_to_string(out.join("iterations.csv")).unwrap().lines().count(),
        2
    );
    assert!(fs::read_to_string(out.join("summary.txt"))
        .unwrap()
        .contains("campaign seed 3"));

    fs::write(&cfg, r#"{"twin.bogus": 1}"#).unwrap();
    let o = faultloop(&["ingest", "--config", cfg.to_str().unwrap(), "--topology", &topo()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("twin.bogus"));
}

#[test]
fn ingest_round_trips_through_canonical_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = faultloop(&[
        "ingest",
        "--topology",
        &topo(),
        "--traffic",
        &traffic(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["routers"], 3);
    assert_eq!(stats["links"], 3);
    assert_eq!(stats["flows"], 3);
    let graph = out.join("graph.json");
    let o = faultloop(&["ingest", "--topology", graph.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(o.stdout, fs::read(&graph).unwrap());
}

#[test]
fn generate_honors_seed_and_class() {
    let args = [
        "generate",
        "--topology",
        &topo(),
        "--traffic",
        &traffic(),
        "--class",
        "fiber",
        "--seed",
        "8",
    ];
    let a = faultloop(&args);
    let b = faultloop(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["meta"]["class"], "fiber");
    assert_eq!(v["events"][0]["event_type"], "fiber_link_failure");
}

#[test]
fn replay_uses_incident_log() {
    let o = faultloop(&[
        "generate",
        "--topology",
        &topo(),
        "--incidents",
        fixture("incidents.jsonl").to_str().unwrap(),
        "--generator",
        "replay",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["generator"], "replay");
    assert_eq!(v["events"][0]["target"], "A-B");
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let o = faultloop(&[
        "simulate",
        fixture("fiber_cut.json").to_str().unwrap(),
        "--topology",
        &topo(),
        "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
