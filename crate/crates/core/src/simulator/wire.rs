//! Replays simulated sessions against a running ingestion endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;
use ureq::Agent;

use super::replay::session_log;
use super::timeline::DomEventTimeline;
use super::SimError;
use crate::ingest::http::COLLECTOR_HEADER;
use crate::model::{encode_event, ENGAGEMENT_REPORT};

const MAX_RETRIES: u32 = 500;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WireStats {
    pub requests: u64,
    pub engagement_requests: u64,
    pub accepted: u64,
    pub rejected_bot: u64,
    pub rejected_malformed: u64,
    pub retries: u64,
}

impl WireStats {
    fn add(&mut self, other: &WireStats) {
        self.requests += other.requests;
        self.engagement_requests += other.engagement_requests;
        self.accepted += other.accepted;
        self.rejected_bot += other.rejected_bot;
        self.rejected_malformed += other.rejected_malformed;
        self.retries += other.retries;
    }
}

pub fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

/// Posts one session's log, one record per request. Browsers that run the
/// collector mark their requests; crawlers send bare hits.
pub fn post_timeline(
    agent: &Agent,
    events_url: &str,
    timeline: &DomEventTimeline,
) -> Result<WireStats, SimError> {
    let mut stats = WireStats::default();
    for event in session_log(timeline)? {
        let body = encode_event(&event);
        let mut attempt = 0;
        loop {
            let mut request = agent
                .post(events_url)
                .header("content-type", "application/json")
                .header("user-agent", &timeline.user_agent)
                .header("x-forwarded-for", &timeline.ip);
            if timeline.runs_collector {
                request = request.header(COLLECTOR_HEADER, "1");
            }
            let response = request
                .send(&body[..])
                .map_err(|e| SimError::Transport(e.to_string()))?;
            stats.requests += 1;
            if event.event_type == ENGAGEMENT_REPORT {
                stats.engagement_requests += 1;
            }
            match response.status().as_u16() {
                202 => stats.accepted += 1,
                403 => stats.rejected_bot += 1,
                400 => stats.rejected_malformed += 1,
                429 if attempt < MAX_RETRIES => {
                    attempt += 1;
                    stats.retries += 1;
                    std::thread::sleep(Duration::from_millis(10));
                    continue;
                }
                status => return Err(SimError::Transport(format!("unexpected status {status}"))),
            }
            break;
        }
    }
    Ok(stats)
}

/// Posts many sessions from `concurrency` threads. Each session is sent in
/// order by a single thread.
pub fn post_sessions(
    events_url: &str,
    timelines: &[DomEventTimeline],
    concurrency: usize,
) -> Result<WireStats, SimError> {
    let next = AtomicUsize::new(0);
    let total = Mutex::new(WireStats::default());
    let failure = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..concurrency.max(1) {
            scope.spawn(|| {
                let agent = agent();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(timeline) = timelines.get(i) else {
                        break;
                    };
                    match post_timeline(&agent, events_url, timeline) {
                        Ok(s) => total.lock().unwrap_or_else(|e| e.into_inner()).add(&s),
                        Err(e) => {
                            failure
                                .lock()
                                .unwrap_or_else(|e| e.into_inner())
                                .get_or_insert(e);
                            break;
                        }
                    }
                }
            });
        }
    });
    match failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
        Some(e) => Err(e),
        None => Ok(total.into_inner().unwrap_or_else(|e| e.into_inner())),
    }
}
