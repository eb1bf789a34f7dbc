//! Deterministic discrete-event engine.
//!
//! Events are kept in an ordered map keyed by `(fire_at, seq)`. The sequence
//! number is taken from a monotone counter on every `schedule` call, so events
//! that share a timestamp fire in insertion order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on NaN or negative input; virtual time is always a finite-or-infinite
    /// non-negative real.
    pub fn from_secs(secs: f64) -> Self {
        assert!(!secs.is_nan() && secs >= 0.0, "invalid simulation time {secs}");
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, delta: f64) -> Self {
        SimTime::from_secs(self.0 + delta.max(0.0))
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// Cancellation handle returned by [`Scheduler::schedule`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventHandle {
    fire_at: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn fire_at(&self) -> SimTime {
        self.fire_at
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("cannot schedule at t={requested} before current clock t={now}")]
    InThePast { requested: SimTime, now: SimTime },
}

/// A dispatched event.
#[derive(Debug, Clone, PartialEq)]
pub struct Fired<E> {
    pub at: SimTime,
    pub seq: u64,
    pub event: E,
}

#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), E>,
    dispatched: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BTreeMap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: SimTime, event: E) -> Result<EventHandle, ScheduleError> {
        if fire_at < self.now {
            return Err(ScheduleError::InThePast {
                requested: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((fire_at, seq), event);
        Ok(EventHandle { fire_at, seq })
    }

    /// Schedules `delay` seconds from now. Negative delays are clamped to zero.
    pub fn schedule_in(&mut self, delay: f64, event: E) -> EventHandle {
        let at = self.now.after(delay);
        self.schedule(at, event)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.remove(&(handle.fire_at, handle.seq)).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.queue.contains_key(&(handle.fire_at, handle.seq))
    }

    /// Pops the next event with `fire_at <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Fired<E>> {
        let (&(at, seq), _) = self.queue.first_key_value()?;
        if at > end {
            return None;
        }
        let event = self.queue.remove(&(at, seq))?;
        self.now = at;
        self.dispatched += 1;
        Some(Fired { at, seq, event })
    }

    /// Moves the clock forward to `end` once no more events remain before it.
    pub fn advance_to(&mut self, end: SimTime) {
        if end > self.now {
            self.now = end;
        }
    }

    /// Dispatches every event with `fire_at <= end` in `(fire_at, seq)` order
    /// and leaves the clock at `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, Fired<E>),
    {
        while let Some(fired) = self.pop_until(end) {
            handler(self, fired);
        }
        self.advance_to(end);
        self.now
    }
}
