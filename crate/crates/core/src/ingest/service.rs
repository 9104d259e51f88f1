//! Submission handling and the worker pool that drains the queue into the
//! store.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;
use tracing::{debug, warn};

use super::classify::{BotReason, ClassifierConfig, RequestMeta, Traffic, TrafficClassifier};
use super::queue::{EventQueue, Lease, PushError, DEFAULT_QUEUE_CAPACITY};
use super::store::{EventStore, StorageError};
use crate::model::{decode_event_with_fallback_ip, CodecError, Event};

pub const DEFAULT_BATCH_SIZE: usize = 512;

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub queue_capacity: usize,
    pub workers: usize,
    pub batch_size: usize,
    pub classifier: ClassifierConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            workers: 4,
            batch_size: DEFAULT_BATCH_SIZE,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accepted {
    pub events: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SubmitError {
    #[error("malformed body at record {index}: {error}")]
    Malformed { index: usize, error: CodecError },
    #[error("rejected as bot traffic ({0:?})")]
    BotRejected(BotReason),
    #[error("queue full, retry later")]
    Backpressure,
    #[error("service is shutting down")]
    ShuttingDown,
}

/// Counters exposed on the health endpoint.
#[derive(Debug, Default)]
pub struct IngestStats {
    pub accepted: AtomicU64,
    pub appended: AtomicU64,
    pub malformed: AtomicU64,
    pub bot_rejected: AtomicU64,
    pub backpressure: AtomicU64,
    pub storage_failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct StatsSnapshot {
    pub accepted: u64,
    pub appended: u64,
    pub malformed: u64,
    pub bot_rejected: u64,
    pub backpressure: u64,
    pub storage_failures: u64,
}

impl IngestStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            accepted: self.accepted.load(Ordering::SeqCst),
            appended: self.appended.load(Ordering::SeqCst),
            malformed: self.malformed.load(Ordering::SeqCst),
            bot_rejected: self.bot_rejected.load(Ordering::SeqCst),
            backpressure: self.backpressure.load(Ordering::SeqCst),
            storage_failures: self.storage_failures.load(Ordering::SeqCst),
        }
    }
}

/// The ingress side: decode, classify, enqueue. Never touches storage.
#[derive(Debug)]
pub struct IngestService {
    queue: Arc<EventQueue>,
    classifier: TrafficClassifier,
    stats: Arc<IngestStats>,
}

impl IngestService {
    pub fn new(config: &IngestConfig) -> Self {
        Self {
            queue: Arc::new(EventQueue::new(config.queue_capacity)),
            classifier: TrafficClassifier::new(config.classifier.clone()),
            stats: Arc::new(IngestStats::default()),
        }
    }

    pub fn queue(&self) -> &Arc<EventQueue> {
        &self.queue
    }

    pub fn stats(&self) -> &Arc<IngestStats> {
        &self.stats
    }

    pub fn classifier(&self) -> &TrafficClassifier {
        &self.classifier
    }

    /// Handles one submission body: one record, or several newline-delimited
    /// records that are accepted or rejected together.
    pub fn handle_submit(&self, body: &[u8], meta: &RequestMeta) -> Result<Accepted, SubmitError> {
        let events = match decode_body(body, &meta.source_ip) {
            Ok(events) => events,
            Err(e) => {
                self.stats.malformed.fetch_add(1, Ordering::Relaxed);
                return Err(e);
            }
        };
        if let Traffic::Bot(reason) = self.classifier.classify(meta) {
            self.stats
                .bot_rejected
                .fetch_add(events.len() as u64, Ordering::Relaxed);
            debug!(ip = %meta.source_ip, ?reason, "dropping bot traffic");
            return Err(SubmitError::BotRejected(reason));
        }
        let n = events.len();
        match self.queue.try_push_all(events) {
            Ok(()) => {
                self.stats.accepted.fetch_add(n as u64, Ordering::SeqCst);
                Ok(Accepted { events: n })
            }
            Err(PushError::Full(_)) => {
                self.stats.backpressure.fetch_add(1, Ordering::Relaxed);
                Err(SubmitError::Backpressure)
            }
            Err(PushError::Closed(_)) => Err(SubmitError::ShuttingDown),
        }
    }
}

fn decode_body(body: &[u8], fallback_ip: &str) -> Result<Vec<Event>, SubmitError> {
    let text_lines: Vec<&[u8]> = body
        .split(|b| *b == b'\n')
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .collect();
    // A single pretty-printed record spans several lines.
    let records = if text_lines.len() > 1
        && decode_event_with_fallback_ip(text_lines[0], fallback_ip).is_err()
    {
        vec![body]
    } else {
        text_lines
    };
    if records.is_empty() {
        return Err(SubmitError::Malformed {
            index: 0,
            error: CodecError::MalformedRecord {
                reason: "empty body".into(),
            },
        });
    }
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            decode_event_with_fallback_ip(r, fallback_ip)
                .map_err(|error| SubmitError::Malformed { index, error })
        })
        .collect()
}

/// Orders store appends by lease ticket so events leave the queue and enter
/// the store in the same order, whichever worker carries them.
#[derive(Debug, Default)]
struct Sequencer {
    next: Mutex<u64>,
    turn: Condvar,
}

impl Sequencer {
    fn run<T>(&self, ticket: u64, f: impl FnOnce() -> T) -> T {
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        while *next != ticket {
            next = self.turn.wait(next).unwrap_or_else(|e| e.into_inner());
        }
        let out = f();
        *next += 1;
        drop(next);
        self.turn.notify_all();
        out
    }
}

fn store_lease(
    queue: &EventQueue,
    store: &dyn EventStore,
    sequencer: &Sequencer,
    stats: Option<&IngestStats>,
    lease: Lease,
) -> Result<usize, StorageError> {
    let (lease, result) = sequencer.run(lease.ticket, move || {
        let result = store.append(&lease.events);
        (lease, result)
    });
    let n = lease.events.len();
    match result {
        Ok(()) => {
            queue.commit(lease);
            if let Some(stats) = stats {
                stats.appended.fetch_add(n as u64, Ordering::SeqCst);
            }
            Ok(n)
        }
        Err(e) => {
            queue.requeue_front(lease);
            warn!(events = n, error = %e, "append failed, batch requeued");
            if let Some(stats) = stats {
                stats.storage_failures.fetch_add(1, Ordering::Relaxed);
            }
            Err(e)
        }
    }
}

/// Drains whatever is queued right now into `store` in batches of at most
/// `batch_size`, returning how many events were appended. A failed append
/// puts its batch back at the front and stops the drain.
pub fn worker_drain(
    queue: &EventQueue,
    store: &dyn EventStore,
    batch_size: usize,
) -> Result<usize, StorageError> {
    let sequencer = Sequencer {
        next: Mutex::new(queue.next_ticket()),
        turn: Condvar::new(),
    };
    let mut appended = 0;
    while let Some(lease) = queue.try_lease(batch_size) {
        appended += store_lease(queue, store, &sequencer, None, lease)?;
    }
    Ok(appended)
}

/// Background workers draining a queue into a store.
pub struct WorkerPool {
    queue: Arc<EventQueue>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn spawn(
        queue: Arc<EventQueue>,
        store: Arc<dyn EventStore>,
        stats: Arc<IngestStats>,
        workers: usize,
        batch_size: usize,
    ) -> Self {
        let sequencer = Arc::new(Sequencer {
            next: Mutex::new(queue.next_ticket()),
            turn: Condvar::new(),
        });
        let handles = (0..workers.max(1))
            .map(|id| {
                let queue = Arc::clone(&queue);
                let store = Arc::clone(&store);
                let stats = Arc::clone(&stats);
                let sequencer = Arc::clone(&sequencer);
                std::thread::Builder::new()
                    .name(format!("ingest-worker-{id}"))
                    .spawn(move || loop {
                        match queue.lease_timeout(batch_size, Duration::from_millis(200)) {
                            Some(lease) => {
                                if store_lease(
                                    &queue,
                                    store.as_ref(),
                                    &sequencer,
                                    Some(&stats),
                                    lease,
                                )
                                .is_err()
                                {
                                    std::thread::sleep(Duration::from_millis(50));
                                }
                            }
                            None if queue.is_closed() && queue.depth() == 0 => break,
                            None => {}
                        }
                    })
                    .expect("spawn ingest worker")
            })
            .collect();
        Self { queue, handles }
    }

    /// Closes the queue and waits until every queued event has been stored.
    pub fn shutdown(self) {
        self.queue.close();
        for handle in self.handles {
            let _ = handle.join();
        }
    }
}
