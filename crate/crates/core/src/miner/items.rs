use std::collections::{BTreeMap, HashSet};

use super::{attention_span, ctr, report_scroll_depth};
use crate::model::{
    string_list, EngagementReport, Event, VisibleImpressionReport, CLICK, ENGAGEMENT_REPORT,
    PAGE_LOAD, VISIBLE_IMPRESSION_REPORT,
};

/// Mined aggregates for one item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ItemFeatures {
    pub item_id: String,
    pub attention_seconds: u64,
    pub attention_by_user: BTreeMap<String, u64>,
    pub engagement_reports: u64,
    /// `None` when none of the item's reports carried a scroll sample.
    pub avg_scroll_depth_percent: Option<f64>,
    pub scroll_reports: u64,
    pub page_load_impressions: u64,
    pub visible_impressions: u64,
    pub clicks: u64,
    /// `None` without visible impressions.
    pub ctr_percent: Option<f64>,
    /// Events about this item that failed validation.
    pub errors: u64,
}

impl ItemFeatures {
    fn new(item_id: &str) -> Self {
        Self {
            item_id: item_id.to_string(),
            ..Self::default()
        }
    }
}

pub type ItemStats = BTreeMap<String, ItemFeatures>;

#[derive(Default)]
struct ScrollAccumulator {
    sum: f64,
    n: u64,
}

fn feature<'a>(items: &'a mut ItemStats, id: &str) -> &'a mut ItemFeatures {
    items
        .entry(id.to_string())
        .or_insert_with(|| ItemFeatures::new(id))
}

/// Aggregates an event log into per-item features.
pub fn item_stats(events: &[Event]) -> ItemStats {
    let mut items: ItemStats = BTreeMap::new();
    let mut scroll: BTreeMap<String, ScrollAccumulator> = BTreeMap::new();
    for event in events {
        match event.event_type.as_str() {
            ENGAGEMENT_REPORT => {
                let item = feature(&mut items, &event.target_entity_id);
                let report = match EngagementReport::try_from(event) {
                    Ok(r) => r,
                    Err(_) => {
                        item.errors += 1;
                        continue;
                    }
                };
                let seconds = match attention_span(std::slice::from_ref(&report)) {
                    Ok(s) => s,
                    Err(_) => {
                        item.errors += 1;
                        continue;
                    }
                };
                item.attention_seconds += seconds;
                item.engagement_reports += 1;
                *item
                    .attention_by_user
                    .entry(event.entity_id.clone())
                    .or_default() += seconds;
                match report_scroll_depth(&report) {
                    Some(Ok(depth)) => {
                        let acc = scroll.entry(event.target_entity_id.clone()).or_default();
                        acc.sum += depth;
                        acc.n += 1;
                    }
                    Some(Err(_)) => item.errors += 1,
                    None => {}
                }
            }
            VISIBLE_IMPRESSION_REPORT => match VisibleImpressionReport::try_from(event) {
                Ok(report) => {
                    for id in &report.viewed_items {
                        feature(&mut items, id).visible_impressions += 1;
                    }
                }
                Err(_) => {
                    feature(&mut items, &event.target_entity_id).errors += 1;
                }
            },
            PAGE_LOAD if event.properties.contains_key("listedItems") => {
                match string_list(&event.properties, "listedItems") {
                    Ok(listed) => {
                        for id in &listed {
                            feature(&mut items, id).page_load_impressions += 1;
                        }
                    }
                    Err(_) => {
                        feature(&mut items, &event.target_entity_id).errors += 1;
                    }
                }
            }
            CLICK => {
                feature(&mut items, &event.target_entity_id).clicks += 1;
            }
            _ => {}
        }
    }

    for (id, item) in items.iter_mut() {
        if let Some(acc) = scroll.get(id) {
            item.scroll_reports = acc.n;
            item.avg_scroll_depth_percent = Some(acc.sum / acc.n as f64);
        }
        item.ctr_percent = ctr(item.clicks, item.visible_impressions).ok();
    }
    items
}

/// Mean attention over the items that received any engagement report.
pub fn fleet_mean_attention(items: &ItemStats) -> Option<f64> {
    let engaged: Vec<&ItemFeatures> = items
        .values()
        .filter(|f| f.engagement_reports > 0)
        .collect();
    if engaged.is_empty() {
        return None;
    }
    let total: u64 = engaged.iter().map(|f| f.attention_seconds).sum();
    Some(total as f64 / engaged.len() as f64)
}

/// Drops repeated deliveries, keyed on entity, target, timestamp and type.
/// The first occurrence wins and order is preserved.
pub fn dedup_events(events: Vec<Event>) -> Vec<Event> {
    let mut seen = HashSet::new();
    events
        .into_iter()
        .filter(|e| {
            seen.insert((
                e.entity_id.clone(),
                e.target_entity_id.clone(),
                e.timestamp,
                e.event_type.clone(),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::SAMPLE_REPORT;
    use crate::model::{
        decode_event, DomEvent, IntervalBucket, Payload, Properties, SessionIdentity,
    };
    use serde_json::json;

    fn engagement(user: &str, item: &str, ts: u64, buckets: usize) -> Event {
        let mut b = IntervalBucket::new();
        b.set(DomEvent::KeyDown, Payload::Marker);
        EngagementReport {
            identity: SessionIdentity::new(user, "user", item, "item", "10.0.0.1"),
            timestamp: ts,
            buckets: vec![b; buckets],
        }
        .to_event()
    }

    fn simple(event_type: &str, user: &str, target: &str, props: Properties) -> Event {
        SessionIdentity::new(user, "user", target, "item", "10.0.0.1").event(
            event_type,
            1_459_535_900,
            props,
        )
    }

    #[test]
    fn empty_log_gives_empty_map() {
        assert!(item_stats(&[]).is_empty());
    }

    #[test]
    fn sample_log_gives_fifteen_seconds() {
        let stats = item_stats(&[decode_event(SAMPLE_REPORT.as_bytes()).unwrap()]);
        let item = &stats["10"];
        assert_eq!(item.attention_seconds, 15);
        assert_eq!(item.attention_by_user["1"], 15);
        assert_eq!(item.avg_scroll_depth_percent, Some(12.0));
        assert_eq!(item.ctr_percent, None);
    }

    #[test]
    fn attention_sums_over_users() {
        let stats = item_stats(&[
            engagement("1", "10", 100, 3),
            engagement("2", "10", 100, 2),
            engagement("1", "11", 100, 1),
        ]);
        assert_eq!(stats["10"].attention_seconds, 25);
        assert_eq!(stats["10"].attention_by_user.len(), 2);
        assert_eq!(stats["11"].attention_seconds, 5);
        assert_eq!(stats["10"].avg_scroll_depth_percent, None);
    }

    #[test]
    fn two_visible_impressions_and_one_click() {
        let mut viewed = Properties::new();
        viewed.insert("viewedItems".into(), json!(["A", "B"]));
        let mut viewed_again = Properties::new();
        viewed_again.insert("viewedItems".into(), json!(["A"]));
        let mut listed = Properties::new();
        listed.insert("listedItems".into(), json!(["A", "B", "C"]));
        let stats = item_stats(&[
            simple(PAGE_LOAD, "1", "listing-1", listed.clone()),
            simple(PAGE_LOAD, "2", "listing-1", listed),
            simple(VISIBLE_IMPRESSION_REPORT, "1", "listing-1", viewed),
            simple(VISIBLE_IMPRESSION_REPORT, "2", "listing-1", viewed_again),
            simple(CLICK, "1", "A", Properties::new()),
        ]);
        let a = &stats["A"];
        assert_eq!(a.visible_impressions, 2);
        assert_eq!(a.page_load_impressions, 2);
        assert_eq!(a.clicks, 1);
        assert_eq!(a.ctr_percent, Some(50.0));
        assert_eq!(stats["C"].visible_impressions, 0);
        assert!(stats
            .values()
            .all(|f| f.visible_impressions <= f.page_load_impressions));
    }

    #[test]
    fn invalid_reports_are_tallied() {
        let mut bad = engagement("1", "10", 100, 1);
        bad.properties
            .insert("report".into(), json!([[], [], [], []]));
        let stats = item_stats(&[bad, engagement("1", "10", 105, 2)]);
        assert_eq!(stats["10"].errors, 1);
        assert_eq!(stats["10"].attention_seconds, 10);
    }

    #[test]
    fn fleet_mean_over_engaged_items() {
        let stats = item_stats(&[
            engagement("1", "a", 1, 3),
            engagement("1", "b", 1, 1),
            simple(CLICK, "1", "c", Properties::new()),
        ]);
        assert_eq!(fleet_mean_attention(&stats), Some(10.0));
        assert_eq!(fleet_mean_attention(&ItemStats::new()), None);
    }

    #[test]
    fn dedup_keeps_first() {
        let a = engagement("1", "10", 100, 1);
        let b = engagement("1", "10", 100, 3);
        let c = engagement("1", "10", 115, 1);
        let out = dedup_events(vec![a.clone(), b, c.clone()]);
        assert_eq!(out, vec![a, c]);
    }
}
