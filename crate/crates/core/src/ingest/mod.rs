//! Collection endpoint, queue, workers and the append-only event store.

pub mod classify;
pub mod http;
pub mod queue;
pub mod service;
pub mod store;

pub use classify::{
    load_denylist, parse_denylist, BotReason, ClassifierConfig, RequestMeta, Traffic,
    TrafficClassifier, DEFAULT_DENYLIST,
};
pub use queue::{EventQueue, PushError};
pub use service::{
    worker_drain, Accepted, IngestConfig, IngestService, StatsSnapshot, SubmitError, WorkerPool,
};
pub use store::{
    scan_path, write_log, CorruptRecord, EventStore, LogStore, ScanFilter, ScanOutput, StorageError,
};
