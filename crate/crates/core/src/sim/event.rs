use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::cluster::{MovieId, PeerId};

pub type SessionId = usize;
pub type LineageId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestArrival { movie: MovieId, requester: PeerId },
    /// Proxy-served prefix finished; hand the stream to a serving peer.
    Handoff(SessionId),
    SessionEnd(SessionId),
    PeerDown(PeerId),
    PeerUp(PeerId),
    RepairComplete(LineageId),
    ReplicationBatch,
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time_s: f64,
    seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_s.total_cmp(&other.time_s).then(self.seq.cmp(&other.seq))
    }
}

/// Min-queue ordered by `(time, insertion sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedule `kind` at absolute `time_s`. Scheduling in the past is a
    /// logic error.
    pub fn schedule(&mut self, time_s: f64, kind: EventKind) {
        assert!(time_s >= self.now, "event {kind:?} at {time_s} scheduled before clock {}", self.now);
        self.heap.push(Reverse(Event { time_s, seq: self.next_seq, kind }));
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.time_s >= self.now);
        self.now = ev.time_s;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
