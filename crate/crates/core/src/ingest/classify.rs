//! Human/bot traffic classification.
//!
//! Most crawlers never execute the collector script, so anything that did
//! not come through it is treated as a bot. On top of that a user-agent
//! denylist and a per-source sustained rate ceiling catch script-executing
//! automation.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMeta {
    pub source_ip: String,
    pub user_agent: String,
    /// The request came from the collector script rather than a bare page hit.
    pub executed_collector: bool,
    /// Epoch seconds.
    pub arrival_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BotReason {
    NoCollector,
    Denylisted,
    RateExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Traffic {
    Human,
    Bot(BotReason),
}

impl Traffic {
    pub fn is_bot(self) -> bool {
        matches!(self, Traffic::Bot(_))
    }
}

/// Agent tokens of well-known crawlers and automation tools.
pub const DEFAULT_DENYLIST: &[&str] = &[
    "bot",
    "crawler",
    "spider",
    "slurp",
    "headlesschrome",
    "phantomjs",
    "python-requests",
    "curl/",
    "wget/",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Case-insensitive user-agent substrings.
    pub denylist: Vec<String>,
    /// Reports per second a single source may sustain.
    pub rate_ceiling: f64,
    pub rate_window_secs: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            denylist: DEFAULT_DENYLIST.iter().map(|s| s.to_string()).collect(),
            rate_ceiling: 10.0,
            rate_window_secs: 60,
        }
    }
}

/// Reads a denylist file: one pattern per line, `#` starts a comment.
pub fn load_denylist(path: &Path) -> io::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_denylist(&text))
}

pub fn parse_denylist(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug)]
pub struct TrafficClassifier {
    config: ClassifierConfig,
    denylist: Vec<String>,
    // per source: (second, requests in that second), oldest first
    counters: Mutex<HashMap<String, VecDeque<(u64, u64)>>>,
}

impl TrafficClassifier {
    pub fn new(config: ClassifierConfig) -> Self {
        let denylist = config.denylist.iter().map(|p| p.to_lowercase()).collect();
        Self {
            config,
            denylist,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    /// Classifies one request and counts it against its source's rate.
    pub fn classify(&self, meta: &RequestMeta) -> Traffic {
        let over_rate = self.count(meta);
        if !meta.executed_collector {
            return Traffic::Bot(BotReason::NoCollector);
        }
        let ua = meta.user_agent.to_lowercase();
        if self.denylist.iter().any(|p| ua.contains(p.as_str())) {
            return Traffic::Bot(BotReason::Denylisted);
        }
        if over_rate {
            return Traffic::Bot(BotReason::RateExceeded);
        }
        Traffic::Human
    }

    fn count(&self, meta: &RequestMeta) -> bool {
        let window = self.config.rate_window_secs.max(1);
        let ceiling = self.config.rate_ceiling * window as f64;
        let mut counters = self.counters.lock().unwrap_or_else(|e| e.into_inner());
        let slots = counters.entry(meta.source_ip.clone()).or_default();
        let oldest = meta.arrival_time.saturating_sub(window - 1);
        while slots.front().is_some_and(|(sec, _)| *sec < oldest) {
            slots.pop_front();
        }
        match slots.back_mut() {
            Some((sec, n)) if *sec >= meta.arrival_time => *n += 1,
            _ => slots.push_back((meta.arrival_time, 1)),
        }
        let total: u64 = slots.iter().map(|(_, n)| n).sum();
        total as f64 > ceiling
    }
}

impl Default for TrafficClassifier {
    fn default() -> Self {
        Self::new(ClassifierConfig::default())
    }
}
