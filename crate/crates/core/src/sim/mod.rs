//! Deterministic discrete-event engine.
//!
//! Time is kept as an integer tick count (1 tick = 1 ms) so that scheduling
//! arithmetic is exact and runs are reproducible across platforms. Events
//! execute in `(fire_time, sequence number)` order: two events scheduled for
//! the same tick fire in insertion order.

mod rng;

pub use rng::{RngStream, StreamLabel};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;
use thiserror::Error;

/// Seconds per base tick. All periods in the simulator are whole ticks.
pub const TICK_SECS: f64 = 1e-3;

/// Virtual time as an integer tick count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: f64) -> Self {
        SimTime((secs / TICK_SECS).round() as u64)
    }

    pub fn as_secs(&self) -> f64 {
        self.0 as f64 * TICK_SECS
    }

    pub fn ticks(&self) -> u64 {
        self.0
    }
}

impl std::ops::Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, ticks: u64) -> SimTime {
        SimTime(self.0 + ticks)
    }
}

impl std::ops::Sub for SimTime {
    type Output = u64;
    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

/// Virtual clock. `now` never decreases.
#[derive(Debug, Clone)]
pub struct SimClock {
    pub now: SimTime,
    /// Seconds per base step.
    pub tick: f64,
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock { now: SimTime::ZERO, tick: TICK_SECS }
    }
}

/// What an event drives when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    MobilityUpdate,
    ChannelSample,
    TrafficTick,
    MeasurementReport,
    HandoverDecision,
    FlowTimer,
}

pub const EVENT_KINDS: [EventKind; 6] = [
    EventKind::MobilityUpdate,
    EventKind::ChannelSample,
    EventKind::TrafficTick,
    EventKind::MeasurementReport,
    EventKind::HandoverDecision,
    EventKind::FlowTimer,
];

impl EventKind {
    fn index(self) -> usize {
        EVENT_KINDS.iter().position(|k| *k == self).unwrap()
    }
}

/// The node or flow an event targets. `World` events drive every entity of
/// their kind in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventTarget {
    World,
    Node(u32),
    Flow(u32),
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub fire_time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub target: EventTarget,
}

/// Handle returned by [`Engine::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at t={fire} ticks before current time t={now} ticks")]
    PastEvent { fire: u64, now: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeapEntry {
    fire_time: SimTime,
    seq: u64,
}

// BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_time, other.seq).cmp(&(self.fire_time, self.seq))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-run accounting returned by [`Engine::run_until`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimSummary {
    pub end_time: SimTime,
    pub executed_by_kind: [u64; 6],
    pub scheduled: u64,
    pub executed: u64,
    pub cancelled: u64,
    pub pending: u64,
}

impl SimSummary {
    pub fn executed_of(&self, kind: EventKind) -> u64 {
        self.executed_by_kind[kind.index()]
    }
}

/// Callback invoked for each fired event. The engine itself is passed back
/// so handlers can schedule follow-up events.
pub trait EventHandler {
    fn handle(&mut self, engine: &mut Engine, ev: &Event);
}

impl<F: FnMut(&mut Engine, &Event)> EventHandler for F {
    fn handle(&mut self, engine: &mut Engine, ev: &Event) {
        self(engine, ev)
    }
}

/// Single-threaded event engine: clock + ordered queue + counters.
///
/// A complete engine is self-contained and `Send`; independent instances can
/// run on separate threads with no shared state.
#[derive(Debug, Default)]
pub struct Engine {
    pub clock: SimClock,
    heap: BinaryHeap<HeapEntry>,
    payloads: std::collections::HashMap<u64, Event>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    scheduled: u64,
    executed: u64,
    cancelled_count: u64,
    executed_by_kind: [u64; 6],
}

impl Engine {
    pub fn new() -> Self {
        Engine::default()
    }

    pub fn now(&self) -> SimTime {
        self.clock.now
    }

    /// Enqueue an event. Fails if `fire_time` is already in the past.
    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        kind: EventKind,
        target: EventTarget,
    ) -> Result<EventHandle, SimError> {
        if fire_time < self.clock.now {
            return Err(SimError::PastEvent { fire: fire_time.0, now: self.clock.now.0 });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(HeapEntry { fire_time, seq });
        self.payloads.insert(seq, Event { fire_time, seq, kind, target });
        Ok(EventHandle(seq))
    }

    /// Cancel a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.payloads.remove(&handle.0).is_some() {
            self.cancelled.insert(handle.0);
            self.cancelled_count += 1;
            true
        } else {
            false
        }
    }

    pub fn pending(&self) -> u64 {
        self.payloads.len() as u64
    }

    /// Conservation counters: every scheduled event is executed, cancelled or
    /// still pending.
    pub fn counts(&self) -> (u64, u64, u64, u64) {
        (self.scheduled, self.executed, self.cancelled_count, self.pending())
    }

    fn pop_due(&mut self, t_end: SimTime) -> Option<Event> {
        while let Some(top) = self.heap.peek() {
            if top.fire_time > t_end {
                return None;
            }
            let entry = self.heap.pop().unwrap();
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            if let Some(ev) = self.payloads.remove(&entry.seq) {
                return Some(ev);
            }
        }
        None
    }

    /// Execute all events with `fire_time <= t_end`, advancing the clock to
    /// each event's time and finally to `t_end`.
    pub fn run_until<H: EventHandler>(&mut self, t_end: SimTime, handler: &mut H) -> SimSummary {
        assert!(t_end >= self.clock.now, "run_until into the past");
        while let Some(ev) = self.pop_due(t_end) {
            debug_assert!(ev.fire_time >= self.clock.now);
            self.clock.now = ev.fire_time;
            self.executed += 1;
            self.executed_by_kind[ev.kind.index()] += 1;
            handler.handle(self, &ev);
        }
        self.clock.now = t_end;
        SimSummary {
            end_time: t_end,
            executed_by_kind: self.executed_by_kind,
            scheduled: self.scheduled,
            executed: self.executed,
            cancelled: self.cancelled_count,
            pending: self.pending(),
        }
    }

    /// Pop and execute the single next event due at or before `t_end`,
    /// advancing the clock to it. Returns the event, or `None` (clock moves
    /// to `t_end`) when nothing is due.
    pub fn step_one<H: EventHandler>(&mut self, t_end: SimTime, handler: &mut H) -> Option<Event> {
        match self.pop_due(t_end) {
            Some(ev) => {
                self.clock.now = ev.fire_time;
                self.executed += 1;
                self.executed_by_kind[ev.kind.index()] += 1;
                handler.handle(self, &ev);
                Some(ev)
            }
            None => {
                self.clock.now = t_end;
                None
            }
        }
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            end_time: self.clock.now,
            executed_by_kind: self.executed_by_kind,
            scheduled: self.scheduled,
            executed: self.executed,
            cancelled: self.cancelled_count,
            pending: self.pending(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Recorder {
        fired: Vec<(SimTime, EventTarget)>,
    }

    impl EventHandler for Recorder {
        fn handle(&mut self, _e: &mut Engine, ev: &Event) {
            self.fired.push((ev.fire_time, ev.target));
        }
    }

    #[test]
    fn schedule_at_now_runs_before_next_tick() {
        let mut eng = Engine::new();
        eng.schedule(SimTime(1), EventKind::FlowTimer, EventTarget::Node(1)).unwrap();
        eng.schedule(SimTime(0), EventKind::FlowTimer, EventTarget::Node(0)).unwrap();
        let mut rec = Recorder { fired: vec![] };
        eng.run_until(SimTime(1), &mut rec);
        assert_eq!(rec.fired[0], (SimTime(0), EventTarget::Node(0)));
        assert_eq!(rec.fired[1], (SimTime(1), EventTarget::Node(1)));
    }

    #[test]
    fn equal_time_fires_in_insertion_order() {
        let mut eng = Engine::new();
        eng.schedule(SimTime(5000), EventKind::FlowTimer, EventTarget::Node(10)).unwrap();
        eng.schedule(SimTime(5000), EventKind::FlowTimer, EventTarget::Node(20)).unwrap();
        let mut rec = Recorder { fired: vec![] };
        eng.run_until(SimTime(6000), &mut rec);
        assert_eq!(rec.fired[0].1, EventTarget::Node(10));
        assert_eq!(rec.fired[1].1, EventTarget::Node(20));
    }

    #[test]
    fn past_event_rejected() {
        let mut eng = Engine::new();
        eng.schedule(SimTime(10), EventKind::FlowTimer, EventTarget::World).unwrap();
        let mut rec = Recorder { fired: vec![] };
        eng.run_until(SimTime(10), &mut rec);
        let err = eng.schedule(SimTime(9), EventKind::FlowTimer, EventTarget::World);
        assert_eq!(err, Err(SimError::PastEvent { fire: 9, now: 10 }));
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut eng = Engine::new();
        let mut rec = Recorder { fired: vec![] };
        let summary = eng.run_until(SimTime::from_secs(10.0), &mut rec);
        assert_eq!(eng.now(), SimTime(10_000));
        assert_eq!(summary.executed, 0);
    }

    #[test]
    fn periodic_event_fires_expected_count() {
        // Every 0.1 s over 1 s -> 10 firings (at 0.1 .. 1.0).
        struct Periodic {
            count: u64,
        }
        impl EventHandler for Periodic {
            fn handle(&mut self, eng: &mut Engine, ev: &Event) {
                self.count += 1;
                let next = ev.fire_time + 100;
                let _ = eng.schedule(next, ev.kind, ev.target);
            }
        }
        let mut eng = Engine::new();
        eng.schedule(SimTime(100), EventKind::TrafficTick, EventTarget::World).unwrap();
        let mut h = Periodic { count: 0 };
        let summary = eng.run_until(SimTime::from_secs(1.0), &mut h);
        assert_eq!(h.count, 10);
        assert_eq!(summary.executed_of(EventKind::TrafficTick), 10);
    }

    #[test]
    fn cancelled_events_do_not_fire() {
        let mut eng = Engine::new();
        let h1 = eng.schedule(SimTime(5), EventKind::FlowTimer, EventTarget::Flow(1)).unwrap();
        eng.schedule(SimTime(5), EventKind::FlowTimer, EventTarget::Flow(2)).unwrap();
        assert!(eng.cancel(h1));
        assert!(!eng.cancel(h1));
        let mut rec = Recorder { fired: vec![] };
        let summary = eng.run_until(SimTime(10), &mut rec);
        assert_eq!(rec.fired.len(), 1);
        assert_eq!(rec.fired[0].1, EventTarget::Flow(2));
        let (scheduled, executed, cancelled, pending) = eng.counts();
        assert_eq!(scheduled, executed + cancelled + pending);
        assert_eq!(summary.cancelled, 1);
    }

    proptest! {
        // Randomized schedules: the clock never goes backwards and no event
        // is lost (scheduled = executed + cancelled + pending).
        #[test]
        fn clock_monotone_and_events_conserved(ops in proptest::collection::vec((0u64..500, 0u64..4), 1..200)) {
            let mut eng = Engine::new();
            let mut handles = Vec::new();
            let mut last_now = SimTime::ZERO;
            for (t, action) in ops {
                match action {
                    0 | 1 => {
                        let fire = SimTime(eng.now().0 + t);
                        handles.push(eng.schedule(fire, EventKind::FlowTimer, EventTarget::World).unwrap());
                    }
                    2 => {
                        if let Some(h) = handles.pop() {
                            eng.cancel(h);
                        }
                    }
                    _ => {
                        let t_end = SimTime(eng.now().0 + t);
                        let mut count = 0u64;
                        let mut monotone = true;
                        let mut prev = eng.now();
                        eng.run_until(t_end, &mut |e: &mut Engine, _ev: &Event| {
                            count += 1;
                            if e.now() < prev { monotone = false; }
                            prev = e.now();
                        });
                        prop_assert!(monotone);
                        prop_assert!(eng.now() >= last_now);
                    }
                }
                last_now = eng.now();
                let (scheduled, executed, cancelled, pending) = eng.counts();
                prop_assert_eq!(scheduled, executed + cancelled + pending);
            }
        }
    }
}
