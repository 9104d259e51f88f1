use serde_json::json;

use super::profile::ListingLayout;
use super::timeline::DomEventTimeline;
use super::SimError;
use crate::model::{
    DomEvent, Event, Payload, Properties, VisibleImpressionReport, CLICK, PAGE_LOAD,
};
use crate::protocol::{Emission, PageKind, PingingSession};

fn visible_items<'a>(
    layout: &ListingLayout,
    listed: &'a [String],
    scroll_top: u64,
    screen_height: u64,
) -> Vec<&'a String> {
    layout
        .visible_slots(listed.len(), scroll_top, screen_height)
        .map(|i| &listed[i])
        .collect()
}

/// Replays each page view through its own pinging collector and returns
/// everything the collectors emitted, in order.
pub fn run_pinging(timeline: &DomEventTimeline) -> Result<Vec<Emission>, SimError> {
    let mut out = Vec::new();
    if !timeline.runs_collector {
        return Ok(out);
    }
    let screen = u64::from(timeline.screen_height);
    for (index, page) in timeline.pages.iter().enumerate() {
        let mut session = PingingSession::new(
            timeline.identity(index),
            page.kind,
            page.loaded_at,
            Vec::new(),
        );
        if page.kind == PageKind::Listing {
            session.observe_visible(
                page.loaded_at,
                visible_items(&timeline.layout, &page.listed_items, 0, screen),
            )?;
        }
        let mut unloaded = false;
        for e in timeline.page_events(index) {
            let payload = match e.scroll {
                Some(sample) => Payload::Scroll(sample),
                None => Payload::Marker,
            };
            session.observe(e.at, e.event, payload)?;
            if e.event == DomEvent::BeforeUnload {
                unloaded = true;
                break;
            }
            if let (PageKind::Listing, Some(sample)) = (page.kind, e.scroll) {
                let top = u64::from(sample.scroll_top);
                session.observe_visible(
                    e.at,
                    visible_items(&timeline.layout, &page.listed_items, top, screen),
                )?;
            }
        }
        if !unloaded {
            session.unload(page.unloaded_at)?;
        }
        out.extend(session.into_sink());
    }
    Ok(out)
}

/// What the page-load method records for a session.
#[derive(Debug, Clone, PartialEq)]
pub struct PageLoadRun {
    pub events: Vec<Event>,
    /// Seconds until the next page load; zero for the final page.
    pub dwell: Vec<u64>,
}

pub fn run_pageload(timeline: &DomEventTimeline) -> PageLoadRun {
    let events = timeline
        .pages
        .iter()
        .enumerate()
        .map(|(index, page)| {
            let mut props = Properties::new();
            props.insert("sessionId".into(), json!(timeline.session_id));
            if page.kind == PageKind::Listing {
                props.insert("listedItems".into(), json!(page.listed_items));
            }
            timeline
                .identity(index)
                .event(PAGE_LOAD, page.loaded_at, props)
        })
        .collect();
    let dwell = timeline
        .pages
        .iter()
        .enumerate()
        .map(|(i, page)| {
            timeline
                .pages
                .get(i + 1)
                .map_or(0, |next| next.loaded_at - page.loaded_at)
        })
        .collect();
    PageLoadRun { events, dwell }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListingExposure {
    /// One per laid-out item per listing load.
    pub page_load_impressions: u64,
    /// One report per listing view with the items that entered the viewport.
    pub reports: Vec<VisibleImpressionReport>,
}

impl ListingExposure {
    pub fn visible_impressions(&self) -> u64 {
        self.reports
            .iter()
            .map(|r| r.viewed_items.len() as u64)
            .sum()
    }
}

/// Counts listing exposure both ways: every rendered item, and the items
/// that overlapped the viewport at load or at any scroll position reached.
pub fn run_listing_exposure(
    timeline: &DomEventTimeline,
    layout: &ListingLayout,
) -> Result<ListingExposure, SimError> {
    layout.validate()?;
    let screen = u64::from(timeline.screen_height);
    let mut exposure = ListingExposure {
        page_load_impressions: 0,
        reports: Vec::new(),
    };
    for (index, page) in timeline.pages.iter().enumerate() {
        if page.kind != PageKind::Listing {
            continue;
        }
        exposure.page_load_impressions += page.listed_items.len() as u64;
        if !timeline.runs_collector {
            continue;
        }
        let offsets = std::iter::once(0).chain(
            timeline
                .page_events(index)
                .filter_map(|e| e.scroll)
                .map(|s| u64::from(s.scroll_top)),
        );
        let mut viewed: Vec<String> = Vec::new();
        for top in offsets {
            for item in visible_items(layout, &page.listed_items, top, screen) {
                if !viewed.contains(item) {
                    viewed.push(item.clone());
                }
            }
        }
        if !viewed.is_empty() {
            exposure.reports.push(VisibleImpressionReport {
                identity: timeline.identity(index),
                timestamp: page.unloaded_at,
                viewed_items: viewed,
            });
        }
    }
    Ok(exposure)
}

/// The event log a session leaves behind: page loads, referral clicks and
/// the collector's reports, ordered by timestamp.
pub fn session_log(timeline: &DomEventTimeline) -> Result<Vec<Event>, SimError> {
    let mut log = run_pageload(timeline).events;
    for (index, page) in timeline.pages.iter().enumerate() {
        if page.referred_by_click && timeline.runs_collector {
            let mut props = Properties::new();
            props.insert("sessionId".into(), json!(timeline.session_id));
            log.push(timeline.identity(index).event(CLICK, page.loaded_at, props));
        }
    }
    log.extend(run_pinging(timeline)?.iter().map(Emission::to_event));
    log.sort_by_key(|e| e.timestamp);
    Ok(log)
}
