//! Bounded multi-producer multi-consumer event queue.
//!
//! Capacity bounds queued events plus events leased to workers, so a failed
//! batch can always be put back at the front without exceeding it.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::model::Event;

pub const DEFAULT_QUEUE_CAPACITY: usize = 65_536;

#[derive(Debug, PartialEq)]
pub enum PushError {
    /// Not enough room for the whole batch; nothing was enqueued.
    Full(Vec<Event>),
    Closed(Vec<Event>),
}

#[derive(Debug)]
struct State {
    items: VecDeque<Event>,
    leased: usize,
    next_ticket: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct EventQueue {
    state: Mutex<State>,
    available: Condvar,
    capacity: usize,
}

/// Events handed to a worker. Must be either committed or requeued.
#[derive(Debug)]
pub struct Lease {
    pub ticket: u64,
    pub events: Vec<Event>,
}

impl EventQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            state: Mutex::new(State {
                items: VecDeque::new(),
                leased: 0,
                next_ticket: 0,
                closed: false,
            }),
            available: Condvar::new(),
            capacity,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Events waiting to be dequeued.
    pub fn depth(&self) -> usize {
        self.lock().items.len()
    }

    /// Events currently leased to workers.
    pub fn leased(&self) -> usize {
        self.lock().leased
    }

    /// Ticket the next lease will carry.
    pub fn next_ticket(&self) -> u64 {
        self.lock().next_ticket
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Enqueues all events or none of them.
    pub fn try_push_all(&self, events: Vec<Event>) -> Result<(), PushError> {
        let mut state = self.lock();
        if state.closed {
            return Err(PushError::Closed(events));
        }
        if state.items.len() + state.leased + events.len() > self.capacity {
            return Err(PushError::Full(events));
        }
        state.items.extend(events);
        drop(state);
        self.available.notify_all();
        Ok(())
    }

    pub fn try_push(&self, event: Event) -> Result<(), PushError> {
        self.try_push_all(vec![event])
    }

    /// Takes up to `max` events without waiting.
    pub fn try_lease(&self, max: usize) -> Option<Lease> {
        let mut state = self.lock();
        Self::take(&mut state, max)
    }

    /// Waits up to `timeout` for events. Returns `None` on timeout or when the
    /// queue is closed and empty.
    pub fn lease_timeout(&self, max: usize, timeout: Duration) -> Option<Lease> {
        let state = self.lock();
        let (mut state, _) = self
            .available
            .wait_timeout_while(state, timeout, |s| s.items.is_empty() && !s.closed)
            .unwrap_or_else(|e| e.into_inner());
        Self::take(&mut state, max)
    }

    fn take(state: &mut State, max: usize) -> Option<Lease> {
        if state.items.is_empty() || max == 0 {
            return None;
        }
        let n = max.min(state.items.len());
        let events: Vec<Event> = state.items.drain(..n).collect();
        state.leased += n;
        let ticket = state.next_ticket;
        state.next_ticket += 1;
        Some(Lease { ticket, events })
    }

    /// Marks a lease as stored.
    pub fn commit(&self, lease: Lease) {
        let mut state = self.lock();
        state.leased -= lease.events.len();
    }

    /// Puts a lease back at the front, preserving its internal order.
    pub fn requeue_front(&self, lease: Lease) {
        let mut state = self.lock();
        state.leased -= lease.events.len();
        for event in lease.events.into_iter().rev() {
            state.items.push_front(event);
        }
        drop(state);
        self.available.notify_all();
    }

    /// Rejects further pushes; waiting consumers wake up and drain what is left.
    pub fn close(&self) {
        self.lock().closed = true;
        self.available.notify_all();
    }
}

impl Default for EventQueue {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY)
    }
}
