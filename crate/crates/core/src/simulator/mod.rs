//! Deterministic synthetic browsing sessions.
//!
//! A [`SessionProfile`] describes a population; [`generate_session`] turns
//! (profile, seed, index) into a [`DomEventTimeline`], which can then be
//! replayed through the pinging collector, the page-load method or the
//! listing geometry. Sessions draw from independent ChaCha streams, so a run
//! of `n` sessions is a prefix of a run of `n + 1`.

mod profile;
mod replay;
mod timeline;
pub mod wire;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::Event;
use crate::protocol::ProtocolError;

pub use profile::{Duration, ListingLayout, PixelRange, SessionProfile};
pub use replay::{
    run_listing_exposure, run_pageload, run_pinging, session_log, ListingExposure, PageLoadRun,
};
pub use timeline::{
    generate_session, item_interest, DomEventTimeline, PageView, TimedEvent, BASE_EPOCH,
    CRAWLER_AGENT, HEADLESS_AGENT, HUMAN_AGENT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid listing layout: {0}")]
    InvalidLayout(String),
    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("transport: {0}")]
    Transport(String),
}

/// Generates sessions `0..sessions` in parallel.
pub fn simulate(
    profile: &SessionProfile,
    seed: u64,
    sessions: u64,
) -> Result<Vec<DomEventTimeline>, SimError> {
    profile.validate()?;
    (0..sessions)
        .into_par_iter()
        .map(|i| generate_session(profile, seed, i))
        .collect()
}

/// The concatenated logs of sessions `0..sessions`, session by session.
pub fn simulate_log(
    profile: &SessionProfile,
    seed: u64,
    sessions: u64,
) -> Result<Vec<Event>, SimError> {
    let timelines = simulate(profile, seed, sessions)?;
    let logs: Vec<Vec<Event>> = timelines
        .par_iter()
        .map(session_log)
        .collect::<Result<_, _>>()?;
    Ok(logs.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_are_prefix_stable() {
        let p = SessionProfile::builtin("human").unwrap();
        let short = simulate(&p, 7, 5).unwrap();
        let long = simulate(&p, 7, 8).unwrap();
        assert_eq!(short[..], long[..5]);
    }

    #[test]
    fn zero_sessions_give_an_empty_log() {
        let p = SessionProfile::builtin("human").unwrap();
        assert!(simulate_log(&p, 7, 0).unwrap().is_empty());
    }

    #[test]
    fn logs_are_reproducible() {
        let p = SessionProfile::builtin("mixed").unwrap();
        assert_eq!(
            simulate_log(&p, 7, 30).unwrap(),
            simulate_log(&p, 7, 30).unwrap()
        );
    }
}
