//! Output tables.

use std::io::Write;

use anyhow::{bail, Context, Result};
use engage_core::miner::{ctr, round2, ComparisonReport, CorrelationReport, ItemStats};
use serde_json::{json, Map, Value};

use crate::Format;

pub const FEATURE_COLUMNS: [&str; 7] = [
    "itemId",
    "attentionSeconds",
    "avgScrollDepthPercent",
    "pageLoadImpressions",
    "visibleImpressions",
    "clicks",
    "ctrPercent",
];

fn fixed(value: Option<f64>, places: usize) -> String {
    value.map(|v| format!("{v:.places$}")).unwrap_or_default()
}

pub fn write_features(out: &mut dyn Write, items: &ItemStats, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(FEATURE_COLUMNS)?;
            for f in items.values() {
                w.write_record([
                    f.item_id.clone(),
                    f.attention_seconds.to_string(),
                    fixed(f.avg_scroll_depth_percent, 2),
                    f.page_load_impressions.to_string(),
                    f.visible_impressions.to_string(),
                    f.clicks.to_string(),
                    fixed(f.ctr_percent, 2),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<Value> = items
                .values()
                .map(|f| {
                    json!({
                        "itemId": f.item_id,
                        "attentionSeconds": f.attention_seconds,
                        "avgScrollDepthPercent": f.avg_scroll_depth_percent.map(round2),
                        "pageLoadImpressions": f.page_load_impressions,
                        "visibleImpressions": f.visible_impressions,
                        "clicks": f.clicks,
                        "ctrPercent": f.ctr_percent,
                        "attentionByUser": f.attention_by_user,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Comparison totals with whichever ratios they define.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub page_load_attention_seconds: u64,
    pub ping_attention_seconds: u64,
    pub attention_ratio: Option<f64>,
    pub page_load_impressions: u64,
    pub visible_impressions: u64,
    pub impression_reduction_percent: Option<f64>,
    pub clicks: u64,
    pub ctr_page_load: Option<f64>,
    pub ctr_visible: Option<f64>,
    pub skipped_records: u64,
}

impl From<&ComparisonReport> for Summary {
    fn from(r: &ComparisonReport) -> Self {
        Self {
            page_load_attention_seconds: r.page_load_attention_seconds,
            ping_attention_seconds: r.ping_attention_seconds,
            attention_ratio: Some(r.attention_ratio),
            page_load_impressions: r.page_load_impressions,
            visible_impressions: r.visible_impressions,
            impression_reduction_percent: Some(r.impression_reduction_percent),
            clicks: r.clicks,
            ctr_page_load: r.ctr_page_load,
            ctr_visible: r.ctr_visible,
            skipped_records: r.skipped_records,
        }
    }
}

impl Summary {
    /// Reads `{"pageLoadAttentionSeconds", "pingAttentionSeconds",
    /// "pageLoadImpressions", "visibleImpressions", "clicks"}`; absent
    /// counts are zero.
    pub fn from_totals_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("totals are not valid JSON")?;
        let Some(object) = value.as_object() else {
            bail!("totals must be a JSON object");
        };
        let count = |key: &str| -> Result<u64> {
            match object.get(key) {
                None => Ok(0),
                Some(v) => v
                    .as_u64()
                    .with_context(|| format!("{key} must be a non-negative integer")),
            }
        };
        let (pl, ping) = (
            count("pageLoadAttentionSeconds")?,
            count("pingAttentionSeconds")?,
        );
        let (pli, vis, clicks) = (
            count("pageLoadImpressions")?,
            count("visibleImpressions")?,
            count("clicks")?,
        );
        if ping == 0 && pli == 0 {
            bail!("insufficient data: totals define neither an attention ratio nor an impression reduction");
        }
        Ok(Self {
            page_load_attention_seconds: pl,
            ping_attention_seconds: ping,
            attention_ratio: (ping > 0).then(|| pl as f64 / ping as f64),
            page_load_impressions: pli,
            visible_impressions: vis,
            impression_reduction_percent: (pli > 0)
                .then(|| (pli as f64 - vis as f64) / pli as f64 * 100.0),
            clicks,
            ctr_page_load: ctr(clicks, pli).ok(),
            ctr_visible: ctr(clicks, vis).ok(),
            skipped_records: 0,
        })
    }
}

pub fn write_comparison(
    out: &mut dyn Write,
    s: &Summary,
    pearson: Option<f64>,
    format: Format,
) -> Result<()> {
    let rows: [(&str, String, Value); 11] = [
        (
            "pageLoadAttentionSeconds",
            s.page_load_attention_seconds.to_string(),
            json!(s.page_load_attention_seconds),
        ),
        (
            "pingAttentionSeconds",
            s.ping_attention_seconds.to_string(),
            json!(s.ping_attention_seconds),
        ),
        (
            "attentionRatio",
            fixed(s.attention_ratio, 3),
            json!(s.attention_ratio.map(|r| (r * 1000.0).round() / 1000.0)),
        ),
        (
            "pageLoadImpressions",
            s.page_load_impressions.to_string(),
            json!(s.page_load_impressions),
        ),
        (
            "visibleImpressions",
            s.visible_impressions.to_string(),
            json!(s.visible_impressions),
        ),
        (
            "impressionReductionPercent",
            fixed(s.impression_reduction_percent, 2),
            json!(s.impression_reduction_percent.map(round2)),
        ),
        ("clicks", s.clicks.to_string(), json!(s.clicks)),
        (
            "ctrPageLoadPercent",
            fixed(s.ctr_page_load, 2),
            json!(s.ctr_page_load),
        ),
        (
            "ctrVisiblePercent",
            fixed(s.ctr_visible, 2),
            json!(s.ctr_visible),
        ),
        (
            "skippedRecords",
            s.skipped_records.to_string(),
            json!(s.skipped_records),
        ),
        (
            "pearson",
            fixed(pearson, 4),
            json!(pearson.map(|r| (r * 10_000.0).round() / 10_000.0)),
        ),
    ];
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["metric", "value"])?;
            for (name, text, _) in &rows {
                w.write_record([*name, text.as_str()])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let object: Map<String, Value> = rows
                .into_iter()
                .map(|(name, _, v)| (name.to_string(), v))
                .collect();
            serde_json::to_writer_pretty(&mut *out, &object)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Two whitespace-separated columns: attention percentile and mean scroll
/// depth of the items in that bin.
pub fn write_curve(out: &mut dyn Write, report: &CorrelationReport) -> Result<()> {
    writeln!(out, "# percentile avgScrollDepthPercent")?;
    for p in &report.curve {
        writeln!(out, "{} {:.2}", p.percentile, p.mean_scroll_depth)?;
    }
    Ok(())
}
