//! Shared workload builders for the benchmarks.

use engage_core::ingest::{EventStore, RequestMeta, StorageError};
use engage_core::simulator::{simulate, simulate_log, DomEventTimeline, SessionProfile};
use engage_core::{encode_event, Event};

pub const SEED: u64 = 2016;

pub fn timelines(profile: &str, sessions: u64) -> Vec<DomEventTimeline> {
    let profile = SessionProfile::builtin(profile).expect("builtin profile");
    simulate(&profile, SEED, sessions).expect("valid profile")
}

pub fn log(profile: &str, sessions: u64) -> Vec<Event> {
    let profile = SessionProfile::builtin(profile).expect("builtin profile");
    simulate_log(&profile, SEED, sessions).expect("valid profile")
}

/// One encoded record per event, as a client would post them.
pub fn encoded(events: &[Event]) -> Vec<Vec<u8>> {
    events.iter().map(encode_event).collect()
}

/// A browser request that passes the classifier.
pub fn collector_request(ip: &str) -> RequestMeta {
    RequestMeta {
        source_ip: ip.to_string(),
        user_agent: "Mozilla/5.0 (X11; Linux x86_64)".to_string(),
        executed_collector: true,
        arrival_time: 1_459_535_879,
    }
}

/// Discards everything it is given.
pub struct NullStore;

impl EventStore for NullStore {
    fn append(&self, _events: &[Event]) -> Result<(), StorageError> {
        Ok(())
    }
}
