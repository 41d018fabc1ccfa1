//! Text and CSV renderings of campaign results.

use std::fmt::Write as _;

use super::{AblationReport, CampaignReport};

fn write_csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per iteration.
pub fn iterations_csv(r: &CampaignReport) -> String {
    let rows = r
        .records
        .iter()
        .map(|it| {
            let (status, id, class, events) = match &it.scenario {
                Some(s) => (
                    "ok",
                    s.id.clone(),
                    s.meta.class.map_or(String::new(), |c| c.to_string()),
                    s.events.len().to_string(),
                ),
                None => ("skipped", String::new(), String::new(), "0".to_string()),
            };
            vec![
                it.iteration.to_string(),
                it.seed.to_string(),
                status.to_string(),
                id,
                class,
                events,
                num(it.impact),
                num(it.running_max),
                it.simulation.as_ref().map_or(0, |s| s.cascade_depth).to_string(),
                it.effectiveness().map_or(String::new(), num),
                it.mitigation
                    .as_ref()
                    .and_then(|m| m.best())
                    .map_or(String::new(), |p| p.plan.id.clone()),
                it.proposals.to_string(),
            ]
        })
        .collect();
    write_csv(
        &[
            "iteration",
            "seed",
            "status",
            "scenario_id",
            "class",
            "events",
            "impact",
            "running_max",
            "cascade_depth",
            "effectiveness",
            "best_plan",
            "attempts",
        ],
        rows,
    )
}

/// Series for plotting impact, depth and effectiveness per iteration.
pub fn plot_csv(r: &CampaignReport) -> String {
    let rows = r
        .records
        .iter()
        .map(|it| {
            vec![
                it.iteration.to_string(),
                num(it.impact),
                it.simulation.as_ref().map_or(0, |s| s.cascade_depth).to_string(),
                num(it.effectiveness().unwrap_or(0.0)),
            ]
        })
        .collect();
    write_csv(&["iteration", "impact", "cascade_depth", "effectiveness"], rows)
}

pub fn ablation_csv(a: &AblationReport) -> String {
    let rows = a
        .rows
        .iter()
        .map(|r| {
            vec![
                r.variant.clone(),
                r.seed.to_string(),
                num(r.mean_impact),
                num(r.normalized),
                num(r.mean_cascade_depth),
                num(r.validity_rate),
                num(r.mean_effectiveness),
            ]
        })
        .collect();
    write_csv(
        &[
            "variant",
            "seed",
            "mean_impact",
            "normalized",
            "mean_cascade_depth",
            "validity_rate",
            "mean_effectiveness",
        ],
        rows,
    )
}

/// Human-readable summary of a campaign and, optionally, its ablation suite.
pub fn summary_text(r: &CampaignReport, ablation: Option<&AblationReport>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "campaign seed {}", r.seed);
    let _ = writeln!(s, "generator {} variant {}", r.generator, r.variant);
    let _ = writeln!(s, "iterations {} skipped {}", r.records.len(), r.skipped);
    let _ = writeln!(s, "validity rate {:.4}", r.validity_rate);
    let _ = writeln!(s, "mean impact {:.4} max impact {:.4}", r.mean_impact, r.max_impact);
    let _ = writeln!(s, "mean cascade depth {:.4}", r.mean_cascade_depth);
    let _ = writeln!(s, "mean mitigation effectiveness {:.4}", r.mean_effectiveness);
    if !r.store.is_empty() {
        s.push_str("top scenarios:\n");
        for e in r.store.entries() {
            let _ = writeln!(
                s,
                "  iteration {} impact {:.4} {}",
                e.iteration, e.impact, e.exemplar.scenario_digest
            );
        }
    }
    if let Some(a) = ablation {
        s.push_str("ablation:\n");
        for row in &a.rows {
            let _ = writeln!(
                s,
                "  {:<12} mean impact {:.4} normalized {:.4} depth {:.4}",
                row.variant, row.mean_impact, row.normalized, row.mean_cascade_depth
            );
        }
    }
    s
}
