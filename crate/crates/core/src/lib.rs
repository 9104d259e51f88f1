//! Engagement telemetry pipeline.
//!
//! Browser event streams arrive as batched engagement reports, pass through
//! an ingestion queue with bot filtering into an append-only log, and are
//! mined into per-item attention span, scroll depth and visible-impression
//! CTR. A deterministic session simulator exercises the whole path.

pub mod fixtures;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod protocol;
pub mod simulator;

pub use model::{
    decode_event, decode_event_with_fallback_ip, encode_event, CodecError, DomEvent,
    EngagementReport, Event, IntervalBucket, Payload, Properties, ScrollSample, SessionIdentity,
    VisibleImpressionReport,
};
pub use protocol::{Collector, Emission, PageKind, PingingSession, ProtocolError};
