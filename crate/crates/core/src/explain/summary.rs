use super::{AttributionRow, ExplainError, FeatureGrouping};
use crate::corpus::{ImpactClass, TrajectoryPattern};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

/// Groups ranked by mean |phi|, descending; ties by name.
pub fn global_importance(rows: &[AttributionRow], grouping: &FeatureGrouping) -> Result<Vec<(String, f64)>, ExplainError> {
    if rows.is_empty() {
        return Err(ExplainError::EmptyRows);
    }
    let n = rows.len() as f64;
    let mut ranked: Vec<(String, f64)> = grouping
        .names
        .iter()
        .enumerate()
        .map(|(g, name)| (name.clone(), rows.iter().map(|r| r.phi[g].abs()).sum::<f64>() / n))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub pattern: TrajectoryPattern,
    /// Predicted class for the attribution's horizon.
    pub predicted: ImpactClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "lowercase")]
pub enum SummaryFilter {
    All,
    Pattern(TrajectoryPattern),
    Predicted(ImpactClass),
}

impl SummaryFilter {
    pub fn label(&self) -> String {
        match self {
            SummaryFilter::All => "all".into(),
            SummaryFilter::Pattern(p) => p.name().into(),
            SummaryFilter::Predicted(c) => format!("predicted_{}", c.name()),
        }
    }

    fn keeps(&self, m: &InstanceMeta) -> bool {
        match self {
            SummaryFilter::All => true,
            SummaryFilter::Pattern(p) => m.pattern == *p,
            SummaryFilter::Predicted(c) => m.predicted == *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub instance_id: String,
    pub group: String,
    pub feature_value: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDataset {
    pub filter: String,
    pub n_instances: usize,
    /// Top-k groups of the filtered rows.
    pub ranking: Vec<(String, f64)>,
    pub points: Vec<SummaryPoint>,
}

/// Summary-plot data for the rows whose instance metadata passes `filter`:
/// one point per (instance, group) over the top-k groups of that subset.
pub fn group_summary(
    rows: &[AttributionRow],
    meta: &BTreeMap<String, InstanceMeta>,
    filter: SummaryFilter,
    grouping: &FeatureGrouping,
    top_k: usize,
) -> Result<SummaryDataset, ExplainError> {
    let mut kept = Vec::new();
    for r in rows {
        let m = meta
            .get(&r.instance_id)
            .ok_or_else(|| ExplainError::InvalidGrouping(format!("no metadata for instance {}", r.instance_id)))?;
        if filter.keeps(m) {
            kept.push(r.clone());
        }
    }
    if kept.is_empty() {
        log::warn!("summary filter {} matched no instances", filter.label());
        return Ok(SummaryDataset { filter: filter.label(), n_instances: 0, ranking: Vec::new(), points: Vec::new() });
    }
    let mut ranking = global_importance(&kept, grouping)?;
    ranking.truncate(top_k);
    let mut points = Vec::with_capacity(kept.len() * ranking.len());
    for (name, _) in &ranking {
        let g = grouping.names.iter().position(|n| n == name).expect("ranked group exists");
        for r in &kept {
            points.push(SummaryPoint {
                instance_id: r.instance_id.clone(),
                group: name.clone(),
                feature_value: r.feature_values[g],
                phi: r.phi[g],
            });
        }
    }
    Ok(SummaryDataset { filter: filter.label(), n_instances: kept.len(), ranking, points })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_attributions_csv<W: Write>(
    mut out: W,
    rows: &[AttributionRow],
    grouping: &FeatureGrouping,
) -> std::io::Result<()> {
    writeln!(out, "instance_id,group,feature_value,phi,std_err,base_value,model_output,horizon,class")?;
    for r in rows {
        for (g, name) in grouping.names.iter().enumerate() {
            let se = r.std_err.as_ref().map(|s| s[g].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&r.instance_id),
                csv_field(name),
                r.feature_values[g],
                r.phi[g],
                se,
                r.base_value,
                r.model_output,
                r.target.horizon.name(),
                r.target.class.name()
            )?;
        }
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut out: W, data: &SummaryDataset) -> std::io::Result<()> {
    writeln!(out, "filter,instance_id,group,feature_value,phi")?;
    for p in &data.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            data.filter,
            csv_field(&p.instance_id),
            csv_field(&p.group),
            p.feature_value,
            p.phi
        )?;
    }
    Ok(())
}

/// Beeswarm-style scatter: one row per ranked group, phi on the x axis,
/// marker colour from blue (low feature value) to red (high), scaled per
/// group.
pub fn beeswarm_svg(data: &SummaryDataset, title: &str) -> String {
    let (left, right, top, row_h) = (140.0, 40.0, 40.0, 28.0);
    let plot_w = 520.0;
    let width = left + plot_w + right;
    let height = top + row_h * data.ranking.len().max(1) as f64 + 40.0;
    let max_abs = data.points.iter().map(|p| p.phi.abs()).fold(0.0, f64::max).max(1e-12);
    let x_of = |phi: f64| left + plot_w * (0.5 + 0.5 * phi / max_abs);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, xml_escape(title));
    let zero = x_of(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{zero}" y1="{top}" x2="{zero}" y2="{}" stroke="#999"/>"##,
        height - 40.0
    );
    for (rank, (name, _)) in data.ranking.iter().enumerate() {
        let yc = top + row_h * (rank as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8.0, yc + 4.0, xml_escape(name));
        let pts: Vec<&super::SummaryPoint> = data.points.iter().filter(|p| &p.group == name).collect();
        let lo = pts.iter().map(|p| p.feature_value).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.feature_value).fold(f64::NEG_INFINITY, f64::max);
        for (i, p) in pts.iter().enumerate() {
            let t = if hi > lo { (p.feature_value - lo) / (hi - lo) } else { 0.5 };
            let jitter = ((i as f64 * 0.618_034).fract() - 0.5) * row_h * 0.6;
            let (r, b) = ((255.0 * t).round() as u8, (255.0 * (1.0 - t)).round() as u8);
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="rgb({r},40,{b})" fill-opacity="0.7"/>"#,
                x_of(p.phi),
                yc + jitter
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Shapley value (|max| = {max_abs:.3e})</text>"#,
        left + plot_w / 2.0,
        height - 12.0
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
