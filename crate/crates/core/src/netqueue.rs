//! Discrete-event core: a min-ordered event queue and a latency model.

use alloc::collections::BinaryHeap;
use alloc::sync::Arc;
use core::cmp::Ordering;

use rand::RngCore;

use crate::dist::ClampedNormal;
use crate::ledger::{Block, BlockId, NodeId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    TxnSubmitted,
    MiningComplete,
    BlockArrival,
    VoteArrival,
    BlockCommitted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Index into the run's transaction log.
    TxnSubmitted { txn: u64 },
    /// Completion of the mining attempt on candidate `block`.
    MiningComplete { block: BlockId },
    BlockArrival { block: Arc<Block> },
    VoteArrival { block: BlockId, voter: NodeId },
    BlockCommitted { block: BlockId },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::TxnSubmitted { .. } => EventKind::TxnSubmitted,
            Payload::MiningComplete { .. } => EventKind::MiningComplete,
            Payload::BlockArrival { .. } => EventKind::BlockArrival,
            Payload::VoteArrival { .. } => EventKind::VoteArrival,
            Payload::BlockCommitted { .. } => EventKind::BlockCommitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: SimTime,
    /// Assigned by the queue on push; unique per queue.
    pub seq: u64,
    pub target: NodeId,
    pub payload: Payload,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

struct Entry(Event);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed so the max-heap yields the earliest (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("event at {at} precedes the simulated clock {now}")]
pub struct PastEvent {
    pub at: SimTime,
    pub now: SimTime,
}

/// Priority queue popping events by `(time, seq)`; the clock advances to the
/// time of each popped event and never moves backward.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
    now: SimTime,
    popped: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules an event and returns its sequence number.
    pub fn push(&mut self, time: SimTime, target: NodeId, payload: Payload) -> Result<u64, PastEvent> {
        if time < self.now {
            return Err(PastEvent { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// `None` once the queue is drained.
    pub fn pop_earliest(&mut self) -> Option<Event> {
        let Entry(event) = self.heap.pop()?;
        self.now = event.time;
        self.popped += 1;
        Some(event)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn pushed(&self) -> u64 {
        self.next_seq
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }
}

/// Message delay model: normal draw clamped below at `floor_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub floor_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            mean_ms: 100.0,
            stddev_ms: 20.0,
            floor_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatencyError {
    #[error("latency floor must be positive and finite, got {0}")]
    Floor(f64),
    #[error("latency mean and stddev must be finite and non-negative")]
    Parameters,
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), LatencyError> {
        if !(self.floor_ms > 0.0 && self.floor_ms.is_finite()) {
            return Err(LatencyError::Floor(self.floor_ms));
        }
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.mean_ms) || !ok(self.stddev_ms) {
            return Err(LatencyError::Parameters);
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        ClampedNormal {
            mean: self.mean_ms,
            stddev: self.stddev_ms,
            floor: self.floor_ms,
        }
        .sample(rng)
    }
}

/// Delivers `payload` to every node in `0..node_count` except `sender`, each
/// after an independent latency draw. Returns the number of events pushed.
pub fn broadcast(
    queue: &mut EventQueue,
    sender: NodeId,
    payload: &Payload,
    node_count: u32,
    model: &LatencyModel,
    rng: &mut dyn RngCore,
    now: SimTime,
) -> usize {
    let mut sent = 0;
    for node in (0..node_count).filter(|&n| n != sender) {
        let at = now.after_ms(model.sample(rng));
        queue
            .push(at, node, payload.clone())
            .expect("latency draws are non-negative");
        sent += 1;
    }
    sent
}
