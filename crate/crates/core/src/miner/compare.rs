use std::collections::BTreeMap;

use serde_json::Value;

use super::{attention_span, ctr, MineError};
use crate::model::{
    string_list, EngagementReport, Event, VisibleImpressionReport, CLICK, ENGAGEMENT_REPORT,
    PAGE_LOAD, VISIBLE_IMPRESSION_REPORT,
};

/// Page-load method versus pinging method over the same sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub page_load_attention_seconds: u64,
    pub ping_attention_seconds: u64,
    /// Page-load seconds per ping second.
    pub attention_ratio: f64,
    pub page_load_impressions: u64,
    pub visible_impressions: u64,
    pub impression_reduction_percent: f64,
    pub clicks: u64,
    pub ctr_page_load: Option<f64>,
    pub ctr_visible: Option<f64>,
    /// Report events in the input that failed validation and were ignored.
    pub skipped_records: u64,
}

impl ComparisonReport {
    pub fn from_totals(
        page_load_attention_seconds: u64,
        ping_attention_seconds: u64,
        page_load_impressions: u64,
        visible_impressions: u64,
        clicks: u64,
    ) -> Result<Self, MineError> {
        if ping_attention_seconds == 0 {
            return Err(MineError::ZeroPingAttention);
        }
        if page_load_impressions == 0 {
            return Err(MineError::ZeroPageLoadImpressions);
        }
        let attention_ratio = page_load_attention_seconds as f64 / ping_attention_seconds as f64;
        let impression_reduction_percent = (page_load_impressions as f64
            - visible_impressions as f64)
            / page_load_impressions as f64
            * 100.0;
        Ok(Self {
            page_load_attention_seconds,
            ping_attention_seconds,
            attention_ratio,
            page_load_impressions,
            visible_impressions,
            impression_reduction_percent,
            clicks,
            ctr_page_load: ctr(clicks, page_load_impressions).ok(),
            ctr_visible: ctr(clicks, visible_impressions).ok(),
            skipped_records: 0,
        })
    }
}

/// Session key for a page load: the entity plus `properties.sessionId`
/// when present.
fn session_key(event: &Event) -> (String, String) {
    let session = match event.properties.get("sessionId") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    (event.entity_id.clone(), session)
}

/// Dwell seconds the page-load method attributes to item pages: for each
/// item page, the time until the session's next page load. A session's last
/// page has no successor and contributes nothing.
pub fn page_load_dwell(page_loads: &[Event]) -> u64 {
    let mut sessions: BTreeMap<(String, String), Vec<&Event>> = BTreeMap::new();
    for event in page_loads.iter().filter(|e| e.event_type == PAGE_LOAD) {
        sessions.entry(session_key(event)).or_default().push(event);
    }
    sessions
        .values_mut()
        .map(|loads| {
            loads.sort_by_key(|e| e.timestamp);
            loads
                .windows(2)
                .filter(|w| w[0].target_entity_type == "item")
                .map(|w| w[1].timestamp - w[0].timestamp)
                .sum::<u64>()
        })
        .sum()
}

fn listed_count(event: &Event) -> u64 {
    if event.event_type != PAGE_LOAD || !event.properties.contains_key("listedItems") {
        return 0;
    }
    string_list(&event.properties, "listedItems").map_or(0, |l| l.len() as u64)
}

/// Compares both attention methods and both impression counts.
pub fn compare_methods(
    page_loads: &[Event],
    ping_reports: &[EngagementReport],
    visibility_reports: &[VisibleImpressionReport],
    clicks: u64,
) -> Result<ComparisonReport, MineError> {
    let page_load_seconds = page_load_dwell(page_loads);
    let ping_seconds = attention_span(ping_reports)?;
    let page_load_impressions = page_loads.iter().map(listed_count).sum();
    let visible: u64 = visibility_reports
        .iter()
        .map(|r| r.viewed_items.len() as u64)
        .sum();
    ComparisonReport::from_totals(
        page_load_seconds,
        ping_seconds,
        page_load_impressions,
        visible,
        clicks,
    )
}

/// Splits a mixed event log and runs [`compare_methods`]. Invalid report
/// records are skipped and counted.
pub fn compare_log(events: &[Event]) -> Result<ComparisonReport, MineError> {
    let mut page_loads = Vec::new();
    let mut ping = Vec::new();
    let mut visibility = Vec::new();
    let mut clicks = 0;
    let mut skipped = 0;
    for event in events {
        match event.event_type.as_str() {
            PAGE_LOAD => page_loads.push(event.clone()),
            CLICK => clicks += 1,
            ENGAGEMENT_REPORT => match EngagementReport::try_from(event) {
                Ok(r) => ping.push(r),
                Err(_) => skipped += 1,
            },
            VISIBLE_IMPRESSION_REPORT => match VisibleImpressionReport::try_from(event) {
                Ok(r) => visibility.push(r),
                Err(_) => skipped += 1,
            },
            _ => {}
        }
    }
    let mut report = compare_methods(&page_loads, &ping, &visibility, clicks)?;
    report.skipped_records = skipped;
    Ok(report)
}
