//! The pinging state machine.
//!
//! DOM events are folded into a 5-second [`IntervalBucket`]. Every tick pushes
//! the bucket onto the pending list if it saw anything; every third tick
//! flushes the pending list as one [`EngagementReport`]. Windows without
//! activity produce nothing. Listing pages additionally collect the items
//! that entered the viewport and flush them as [`VisibleImpressionReport`]s.
//!
//! The machine never reads a clock. Callers drive it with explicit
//! timestamps, either tick-by-tick or through [`Collector::advance_to`].

use std::collections::HashSet;

use thiserror::Error;

use crate::model::{
    DomEvent, EngagementReport, Event, IntervalBucket, Payload, SessionIdentity, UnknownEventName,
    VisibleImpressionReport, MAX_REPORT_BUCKETS,
};

pub const TICK_SECONDS: u64 = 5;
pub const TICKS_PER_FLUSH: u8 = 3;
pub const FLUSH_SECONDS: u64 = TICK_SECONDS * TICKS_PER_FLUSH as u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    UnknownEventName(#[from] UnknownEventName),
    #[error("scroll events must carry a scroll sample")]
    MissingScrollSample,
    #[error("clock regression: {now} is not after {last}")]
    ClockRegression { now: u64, last: u64 },
    #[error("misaligned call at {now}, expected {expected}")]
    Misaligned { now: u64, expected: u64 },
    #[error("collector already unloaded")]
    Closed,
}

/// Which report family a page produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PageKind {
    /// Item documents produce engagement reports.
    Item,
    /// Listing documents produce visible-impression reports.
    Listing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    Engagement(EngagementReport),
    Visibility(VisibleImpressionReport),
}

impl Emission {
    pub fn to_event(&self) -> Event {
        match self {
            Emission::Engagement(r) => r.to_event(),
            Emission::Visibility(r) => r.to_event(),
        }
    }

    pub fn timestamp(&self) -> u64 {
        match self {
            Emission::Engagement(r) => r.timestamp,
            Emission::Visibility(r) => r.timestamp,
        }
    }
}

/// Per page-view collector state.
#[derive(Debug, Clone)]
pub struct Collector {
    identity: SessionIdentity,
    kind: PageKind,
    started_at: u64,
    current: IntervalBucket,
    pending: Vec<IntervalBucket>,
    viewed: Vec<String>,
    reported: HashSet<String>,
    last_tick_at: u64,
    last_flush_at: u64,
    ticks_since_flush: u8,
    closed: bool,
}

impl Collector {
    /// Starts a collector at page load. Tick and flush boundaries are aligned
    /// to `loaded_at`.
    pub fn new(identity: SessionIdentity, kind: PageKind, loaded_at: u64) -> Self {
        Self {
            identity,
            kind,
            started_at: loaded_at,
            current: IntervalBucket::new(),
            pending: Vec::with_capacity(MAX_REPORT_BUCKETS),
            viewed: Vec::new(),
            reported: HashSet::new(),
            last_tick_at: loaded_at,
            last_flush_at: loaded_at,
            ticks_since_flush: 0,
            closed: false,
        }
    }

    pub fn identity(&self) -> &SessionIdentity {
        &self.identity
    }

    pub fn kind(&self) -> PageKind {
        self.kind
    }

    pub fn started_at(&self) -> u64 {
        self.started_at
    }

    pub fn current_bucket(&self) -> &IntervalBucket {
        &self.current
    }

    pub fn pending_buckets(&self) -> &[IntervalBucket] {
        &self.pending
    }

    pub fn viewed_items(&self) -> &[String] {
        &self.viewed
    }

    pub fn last_tick_at(&self) -> u64 {
        self.last_tick_at
    }

    pub fn last_flush_at(&self) -> u64 {
        self.last_flush_at
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Records a DOM event by its wire name.
    pub fn record_dom_event(&mut self, name: &str, payload: Payload) -> Result<(), ProtocolError> {
        let event: DomEvent = name.parse()?;
        self.record(event, payload)
    }

    pub fn record(&mut self, event: DomEvent, payload: Payload) -> Result<(), ProtocolError> {
        self.ensure_open()?;
        if event == DomEvent::Scroll && !matches!(payload, Payload::Scroll(_)) {
            return Err(ProtocolError::MissingScrollSample);
        }
        if self.kind == PageKind::Item {
            self.current.set(event, payload);
        }
        Ok(())
    }

    /// Closes the current 5-second interval at `now`.
    pub fn tick(&mut self, now: u64) -> Result<(), ProtocolError> {
        self.ensure_open()?;
        if now <= self.last_tick_at {
            return Err(ProtocolError::ClockRegression {
                now,
                last: self.last_tick_at,
            });
        }
        let expected = self.last_tick_at + TICK_SECONDS;
        if now != expected || self.ticks_since_flush >= TICKS_PER_FLUSH {
            return Err(ProtocolError::Misaligned { now, expected });
        }
        if !self.current.is_empty() {
            self.pending.push(std::mem::take(&mut self.current));
        }
        self.last_tick_at = now;
        self.ticks_since_flush += 1;
        Ok(())
    }

    /// Emits the pending buckets as one report at a 15-second boundary.
    /// Returns `None` when the window saw no activity.
    pub fn flush(&mut self, now: u64) -> Result<Option<EngagementReport>, ProtocolError> {
        self.ensure_open()?;
        if now <= self.last_flush_at {
            return Err(ProtocolError::ClockRegression {
                now,
                last: self.last_flush_at,
            });
        }
        if self.ticks_since_flush != TICKS_PER_FLUSH || now != self.last_tick_at {
            let expected = self.last_flush_at + FLUSH_SECONDS;
            return Err(ProtocolError::Misaligned { now, expected });
        }
        self.last_flush_at = now;
        self.ticks_since_flush = 0;
        Ok(self.take_report(now))
    }

    /// Adds the items currently intersecting the viewport. Items already
    /// reported during this page view are ignored.
    pub fn record_visible_items<I, S>(&mut self, items: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for item in items {
            let item = item.as_ref();
            if !self.reported.contains(item) && !self.viewed.iter().any(|v| v == item) {
                self.viewed.push(item.to_string());
            }
        }
    }

    /// Emits the viewed-item set at a 15-second boundary, or at any time when
    /// `on_unload` is set.
    pub fn flush_visibility(
        &mut self,
        now: u64,
        on_unload: bool,
    ) -> Result<Option<VisibleImpressionReport>, ProtocolError> {
        self.ensure_open()?;
        if !on_unload {
            let offset = now.saturating_sub(self.started_at);
            if now <= self.started_at || !offset.is_multiple_of(FLUSH_SECONDS) {
                let expected = self.started_at + (offset / FLUSH_SECONDS + 1) * FLUSH_SECONDS;
                return Err(ProtocolError::Misaligned { now, expected });
            }
        }
        Ok(self.take_visibility(now))
    }

    /// Runs every tick and flush due at or before `now`. Missed boundaries
    /// are processed in order, so intervals with no recorded events stay empty.
    pub fn advance_to(&mut self, now: u64) -> Result<Vec<Emission>, ProtocolError> {
        self.ensure_open()?;
        if now < self.last_tick_at {
            return Err(ProtocolError::ClockRegression {
                now,
                last: self.last_tick_at,
            });
        }
        let mut out = Vec::new();
        while self.last_tick_at + TICK_SECONDS <= now {
            let boundary = self.last_tick_at + TICK_SECONDS;
            self.tick(boundary)?;
            if self.ticks_since_flush == TICKS_PER_FLUSH {
                if let Some(report) = self.flush(boundary)? {
                    out.push(Emission::Engagement(report));
                }
                if let Some(report) = self.flush_visibility(boundary, false)? {
                    out.push(Emission::Visibility(report));
                }
            }
        }
        Ok(out)
    }

    /// Handles `beforeunload` at `now`: records the event, then flushes the
    /// pending buckets together with the in-progress one, and the viewed
    /// items. The collector is closed afterwards.
    ///
    /// An unload exactly on a tick boundary closes the interval ending there
    /// rather than opening a new one, unless an event in the same second has
    /// already opened it.
    pub fn unload(&mut self, now: u64) -> Result<Vec<Emission>, ProtocolError> {
        let through = if now > self.last_tick_at {
            now - 1
        } else {
            now
        };
        let mut out = self.advance_to(through)?;
        self.record(DomEvent::BeforeUnload, Payload::Marker)?;
        if !self.current.is_empty() {
            self.pending.push(std::mem::take(&mut self.current));
        }
        if let Some(report) = self.take_report(now) {
            out.push(Emission::Engagement(report));
        }
        if let Some(report) = self.take_visibility(now) {
            out.push(Emission::Visibility(report));
        }
        self.closed = true;
        Ok(out)
    }

    fn take_report(&mut self, now: u64) -> Option<EngagementReport> {
        if self.pending.is_empty() {
            return None;
        }
        debug_assert!(self.pending.len() <= MAX_REPORT_BUCKETS);
        Some(EngagementReport {
            identity: self.identity.clone(),
            timestamp: now,
            buckets: std::mem::take(&mut self.pending),
        })
    }

    fn take_visibility(&mut self, now: u64) -> Option<VisibleImpressionReport> {
        if self.viewed.is_empty() {
            return None;
        }
        let viewed = std::mem::take(&mut self.viewed);
        self.reported.extend(viewed.iter().cloned());
        Some(VisibleImpressionReport {
            identity: self.identity.clone(),
            timestamp: now,
            viewed_items: viewed,
        })
    }

    fn ensure_open(&self) -> Result<(), ProtocolError> {
        if self.closed {
            Err(ProtocolError::Closed)
        } else {
            Ok(())
        }
    }
}

/// Receives the reports a [`PingingSession`] emits.
pub trait ReportSink {
    fn send(&mut self, emission: Emission);
}

impl ReportSink for Vec<Emission> {
    fn send(&mut self, emission: Emission) {
        self.push(emission);
    }
}

impl<F: FnMut(Emission)> ReportSink for F {
    fn send(&mut self, emission: Emission) {
        self(emission)
    }
}

/// A collector wired to a transport. Each call first advances the clock to
/// the call's timestamp, then applies the event.
pub struct PingingSession<S> {
    collector: Collector,
    sink: S,
}

impl<S: ReportSink> PingingSession<S> {
    pub fn new(identity: SessionIdentity, kind: PageKind, loaded_at: u64, sink: S) -> Self {
        Self {
            collector: Collector::new(identity, kind, loaded_at),
            sink,
        }
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    pub fn observe(
        &mut self,
        at: u64,
        event: DomEvent,
        payload: Payload,
    ) -> Result<(), ProtocolError> {
        if event == DomEvent::BeforeUnload {
            return self.unload(at);
        }
        self.advance(at)?;
        self.collector.record(event, payload)
    }

    pub fn observe_visible<I, T>(&mut self, at: u64, items: I) -> Result<(), ProtocolError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        self.advance(at)?;
        self.collector.record_visible_items(items);
        Ok(())
    }

    pub fn advance(&mut self, now: u64) -> Result<(), ProtocolError> {
        for emission in self.collector.advance_to(now)? {
            self.sink.send(emission);
        }
        Ok(())
    }

    pub fn unload(&mut self, at: u64) -> Result<(), ProtocolError> {
        for emission in self.collector.unload(at)? {
            self.sink.send(emission);
        }
        Ok(())
    }

    pub fn into_sink(self) -> S {
        self.sink
    }
}
