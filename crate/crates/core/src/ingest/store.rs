//! Append-only newline-delimited event log, partitioned by UTC day.
//!
//! Partition files are named `events-YYYYMMDD.ndjson`. Readers only see
//! bytes up to the last committed append, so a scan running next to a writer
//! observes a prefix of each partition and never a half-written line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::DateTime;
use thiserror::Error;

use crate::model::{decode_event, encode_event, CodecError, Event};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("storage failure: {0}")]
    Other(String),
}

/// Somewhere workers can put events.
pub trait EventStore: Send + Sync {
    /// Appends a batch in order. On error nothing is considered stored.
    fn append(&self, events: &[Event]) -> Result<(), StorageError>;
}

/// Partition key (`YYYYMMDD`, UTC) for an epoch-seconds timestamp.
pub fn partition_key(timestamp: u64) -> String {
    DateTime::from_timestamp(timestamp as i64, 0)
        .map(|dt| dt.format("%Y%m%d").to_string())
        .unwrap_or_else(|| "00000000".to_string())
}

pub fn partition_file_name(key: &str) -> String {
    format!("events-{key}.ndjson")
}

#[derive(Debug, Clone, Copy, Default)]
struct PartitionState {
    committed_bytes: u64,
    records: u64,
}

/// File-backed [`EventStore`].
#[derive(Debug)]
pub struct LogStore {
    dir: PathBuf,
    partitions: Mutex<BTreeMap<String, PartitionState>>,
}

impl LogStore {
    /// Opens (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StorageError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut partitions = BTreeMap::new();
        for (key, path) in partition_files(&dir)? {
            let io_err = |source| StorageError::Io {
                path: path.clone(),
                source,
            };
            let bytes = fs::read(&path).map_err(io_err)?;
            // A torn trailing line from a crash stays outside the committed prefix.
            let committed = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
            let records = bytes[..committed].iter().filter(|b| **b == b'\n').count();
            partitions.insert(
                key,
                PartitionState {
                    committed_bytes: committed as u64,
                    records: records as u64,
                },
            );
        }
        Ok(Self {
            dir,
            partitions: Mutex::new(partitions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Record count per partition key.
    pub fn partition_counts(&self) -> BTreeMap<String, u64> {
        self.lock()
            .iter()
            .map(|(k, s)| (k.clone(), s.records))
            .collect()
    }

    pub fn record_count(&self) -> u64 {
        self.lock().values().map(|s| s.records).sum()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, PartitionState>> {
        self.partitions.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// All events matching `filter`, in partition then append order.
    pub fn scan(&self, filter: &ScanFilter) -> Result<ScanOutput, StorageError> {
        let snapshot: Vec<(String, u64)> = self
            .lock()
            .iter()
            .map(|(k, s)| (k.clone(), s.committed_bytes))
            .collect();
        let mut out = ScanOutput::default();
        for (key, committed) in snapshot {
            let path = self.dir.join(partition_file_name(&key));
            let file = File::open(&path).map_err(|source| StorageError::Io {
                path: path.clone(),
                source,
            })?;
            scan_reader(&key, file.take(committed), filter, &mut out).map_err(|source| {
                StorageError::Io {
                    path: path.clone(),
                    source,
                }
            })?;
        }
        Ok(out)
    }
}

impl EventStore for LogStore {
    fn append(&self, events: &[Event]) -> Result<(), StorageError> {
        let mut grouped: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for event in events {
            let key = partition_key(event.timestamp);
            let buf = grouped.entry(key.clone()).or_default();
            buf.extend_from_slice(&encode_event(event));
            buf.push(b'\n');
            *counts.entry(key).or_default() += 1;
        }

        let mut partitions = self.lock();
        for (key, bytes) in grouped {
            let path = self.dir.join(partition_file_name(&key));
            let state = partitions.entry(key.clone()).or_default();
            let io_err = |source| StorageError::Io {
                path: path.clone(),
                source,
            };
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err)?;
            // Drop anything beyond the committed prefix (a previously failed write).
            if file.metadata().map_err(io_err)?.len() != state.committed_bytes {
                file.set_len(state.committed_bytes).map_err(io_err)?;
            }
            file.write_all(&bytes).map_err(io_err)?;
            file.flush().map_err(io_err)?;
            state.committed_bytes += bytes.len() as u64;
            state.records += counts[&key];
        }
        Ok(())
    }
}

fn partition_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, StorageError> {
    let entries = fs::read_dir(dir).map_err(|source| StorageError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(key) = name
            .strip_prefix("events-")
            .and_then(|n| n.strip_suffix(".ndjson"))
        {
            if key.len() == 8 && key.bytes().all(|b| b.is_ascii_digit()) {
                files.push((key.to_string(), entry.path()));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Which events a scan yields. Unset fields match everything.
#[derive(Debug, Clone, Default)]
pub struct ScanFilter {
    pub event_type: Option<String>,
    pub entity_id: Option<String>,
    pub target_entity_id: Option<String>,
    /// Inclusive lower bound, epoch seconds.
    pub from: Option<u64>,
    /// Exclusive upper bound, epoch seconds.
    pub until: Option<u64>,
}

impl ScanFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn event_type(mut self, t: impl Into<String>) -> Self {
        self.event_type = Some(t.into());
        self
    }

    pub fn target(mut self, id: impl Into<String>) -> Self {
        self.target_entity_id = Some(id.into());
        self
    }

    pub fn entity(mut self, id: impl Into<String>) -> Self {
        self.entity_id = Some(id.into());
        self
    }

    pub fn between(mut self, from: u64, until: u64) -> Self {
        self.from = Some(from);
        self.until = Some(until);
        self
    }

    pub fn matches(&self, event: &Event) -> bool {
        self.event_type
            .as_deref()
            .is_none_or(|t| t == event.event_type)
            && self
                .entity_id
                .as_deref()
                .is_none_or(|id| id == event.entity_id)
            && self
                .target_entity_id
                .as_deref()
                .is_none_or(|id| id == event.target_entity_id)
            && self.from.is_none_or(|from| event.timestamp >= from)
            && self.until.is_none_or(|until| event.timestamp < until)
    }
}

/// A line that failed to decode.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptRecord {
    pub partition: String,
    /// Zero-based line number within the partition.
    pub line: usize,
    pub error: CodecError,
}

#[derive(Debug, Default)]
pub struct ScanOutput {
    pub events: Vec<Event>,
    pub corrupt: Vec<CorruptRecord>,
}

fn scan_reader(
    partition: &str,
    reader: impl Read,
    filter: &ScanFilter,
    out: &mut ScanOutput,
) -> io::Result<()> {
    let mut reader = BufReader::new(reader);
    let mut line = Vec::new();
    let mut index = 0;
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        if !line.iter().all(u8::is_ascii_whitespace) {
            match decode_event(&line) {
                Ok(event) if filter.matches(&event) => out.events.push(event),
                Ok(_) => {}
                Err(error) => out.corrupt.push(CorruptRecord {
                    partition: partition.to_string(),
                    line: index,
                    error,
                }),
            }
        }
        index += 1;
    }
    Ok(())
}

/// Scans a single log file, or every partition file when `path` is a
/// directory.
pub fn scan_path(path: &Path, filter: &ScanFilter) -> Result<ScanOutput, StorageError> {
    let io_err = |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    };
    if path.is_dir() {
        let mut out = ScanOutput::default();
        for (key, file) in partition_files(path)? {
            let reader =
                File::open(&file).map_err(|source| StorageError::Io { path: file, source })?;
            scan_reader(&key, reader, filter, &mut out).map_err(io_err)?;
        }
        Ok(out)
    } else {
        let mut out = ScanOutput::default();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let reader = File::open(path).map_err(io_err)?;
        scan_reader(&name, reader, filter, &mut out).map_err(io_err)?;
        Ok(out)
    }
}

/// Writes events as a newline-delimited log.
pub fn write_log<'a>(
    mut writer: impl Write,
    events: impl IntoIterator<Item = &'a Event>,
) -> io::Result<()> {
    for event in events {
        writer.write_all(&encode_event(event))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
