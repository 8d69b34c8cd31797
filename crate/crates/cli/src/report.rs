//! Markdown summary assembled from the other stages' outputs.

use crate::error::PipelineError;
use crate::files::{self, require};
use crate::stages::Ctx;
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;

const S: &str = "report";

fn fmt(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.4}"),
            _ => n.to_string(),
        },
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn optional_json(ctx: &Ctx, name: &str) -> Result<Option<Value>, PipelineError> {
    let p = ctx.path(name);
    if p.is_file() {
        files::read_json(S, &p).map(Some)
    } else {
        Ok(None)
    }
}

pub fn write_report(ctx: &Ctx) -> Result<(), PipelineError> {
    require(S, ctx.out, &[files::THRESHOLDS, files::LABEL_SUMMARY, files::METRICS_JSON, files::COMPARISON])?;
    let thresholds: Value = files::read_json(S, &ctx.path(files::THRESHOLDS))?;
    let labels: Value = files::read_json(S, &ctx.path(files::LABEL_SUMMARY))?;
    let metrics: Value = files::read_json(S, &ctx.path(files::METRICS_JSON))?;
    let mut md = String::new();

    writeln!(md, "# Technology impact run\n").unwrap();
    writeln!(md, "Seed {}, config hash `{}`.\n", ctx.cfg.seed, ctx.cfg.hash()).unwrap();

    writeln!(md, "## Labels\n").unwrap();
    writeln!(
        md,
        "Threshold mode `{}`, observation end {}, focal years {}, test year {} ({} train / {} test patents).\n",
        fmt(&labels["threshold_mode"]),
        fmt(&labels["observation_end"]),
        labels["focal_years"],
        labels["test_year"],
        labels["n_train"],
        labels["n_test"],
    )
    .unwrap();
    writeln!(md, "| horizon | BT min | VT min | labelled | excluded | MT | VT | BT |").unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|---|").unwrap();
    for h in ["short", "mid", "long"] {
        let t = &thresholds[h];
        let l = &labels["horizons"][h];
        writeln!(
            md,
            "| {h} | {} | {} | {} | {} | {} | {} | {} |",
            t["bt_min"], t["vt_min"], l["labelled"], l["excluded_incomplete_window"], l["counts"]["MT"], l["counts"]["VT"], l["counts"]["BT"]
        )
        .unwrap();
    }
    if let Some(p) = labels["patterns"].as_object() {
        let parts: Vec<String> = p.iter().map(|(k, v)| format!("{k} {v}")).collect();
        writeln!(md, "\nTrajectory patterns: {}.", parts.join(", ")).unwrap();
    }

    writeln!(md, "\n## Test-year metrics (multi-task model)\n").unwrap();
    const COLS: [&str; 6] = ["precision", "recall", "f1", "mcc", "accuracy", "dor"];
    writeln!(md, "| horizon | class | precision | recall | F1 | MCC | accuracy | DOR |").unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|---|").unwrap();
    // rows are long-format (horizon, class, metric, value); keep first-seen order
    let mut table: Vec<((String, String), BTreeMap<String, String>)> = Vec::new();
    for r in metrics["rows"].as_array().into_iter().flatten() {
        let key = (fmt(&r["horizon"]), fmt(&r["class"]));
        let pos = match table.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                table.push((key, BTreeMap::new()));
                table.len() - 1
            }
        };
        table[pos].1.insert(fmt(&r["metric"]), fmt(&r["value"]));
    }
    for ((h, c), m) in &table {
        let cells: Vec<&str> = COLS.iter().map(|k| m.get(*k).map_or("-", String::as_str)).collect();
        writeln!(md, "| {h} | {c} | {} |", cells.join(" | ")).unwrap();
    }
    writeln!(
        md,
        "\nSum of multiclass MCC over horizons: {} (single-task {}, majority baseline {}).",
        fmt(&metrics["sum_multiclass_mcc"]),
        fmt(&metrics["stl_sum_multiclass_mcc"]),
        fmt(&metrics["majority_baseline_sum_multiclass_mcc"])
    )
    .unwrap();

    writeln!(md, "\n## Single-task vs multi-task, BT class (delta = STL - MTL)\n").unwrap();
    writeln!(md, "| horizon | metric | MTL | STL | delta |").unwrap();
    writeln!(md, "|---|---|---|---|---|").unwrap();
    let mut rdr = csv::Reader::from_path(ctx.path(files::COMPARISON)).map_err(|e| PipelineError::data(S, e))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PipelineError::data(S, e))?;
        if rec.get(1) == Some("BT") {
            let num = |i: usize| rec[i].parse::<f64>().map_or(rec[i].to_string(), |x| format!("{x:.4}"));
            writeln!(md, "| {} | {} | {} | {} | {} |", &rec[0], &rec[2], num(3), num(4), num(5)).unwrap();
        }
    }

    if let Some(cv) = optional_json(ctx, files::CV_SUMMARY)? {
        writeln!(md, "\n## Cross-validation\n").unwrap();
        writeln!(md, "{}-fold mean of summed macro MCC: {}.", cv["k"], fmt(&cv["mean_sum_macro_mcc"])).unwrap();
    }

    let imp = ctx.path(files::IMPORTANCE);
    if imp.is_file() {
        writeln!(md, "\n## Top indicator groups by mean |phi|\n").unwrap();
        let mut rdr = csv::Reader::from_path(&imp).map_err(|e| PipelineError::data(S, e))?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| PipelineError::data(S, e))?;
            let rank: usize = rec[2].parse().unwrap_or(usize::MAX);
            if rank <= 5 {
                let v: f64 = rec[4].parse().unwrap_or(f64::NAN);
                writeln!(md, "- {} {} #{}: {} ({v:.4})", &rec[0], &rec[1], rank, &rec[3]).unwrap();
            }
        }
    }

    if let Some(v) = optional_json(ctx, files::VALIDATION_JSON)? {
        writeln!(md, "\n## Value-indicator trend tests\n").unwrap();
        writeln!(md, "Classes from `{}`, method `{}`.\n", fmt(&v["class_source"]), fmt(&v["method"])).unwrap();
        writeln!(md, "| horizon | indicator | JT | z | p |").unwrap();
        writeln!(md, "|---|---|---|---|---|").unwrap();
        for t in v["tests"].as_array().into_iter().flatten() {
            let r = &t["result"];
            writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                fmt(&t["horizon"]),
                fmt(&t["indicator"]),
                fmt(&r["jt_statistic"]),
                fmt(&r["z"]),
                fmt(&r["p_value"])
            )
            .unwrap();
        }
        for s in v["skipped"].as_array().into_iter().flatten() {
            writeln!(md, "\nSkipped {}: {}", fmt(&s["horizon"]), fmt(&s["reason"])).unwrap();
        }
    }

    if let Some(t) = optional_json(ctx, files::TOPIC_SCORES_JSON)? {
        let n = t["cells"].as_array().map_or(0, Vec::len);
        writeln!(md, "\n## Topic scores\n").unwrap();
        writeln!(md, "{n} topic-year cells scored on the {} horizon; see `{}`.", fmt(&t["horizon"]), files::TOPIC_SCORES).unwrap();
    }

    files::write_text(S, &ctx.path(files::REPORT), &md)
}
