//! Deterministic event queue with cancellable groups.
//!
//! Entries are ordered by `(time, node, rank, seq)`. The sequence number is
//! assigned at scheduling time, so equal keys fire in scheduling order.

use crate::time::RefTime;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule at {at} before the current time {now}")]
    InThePast { at: RefTime, now: RefTime },
}

/// Identifies a set of entries that can be cancelled together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CancelGroup {
    pub node: usize,
    pub tag: u64,
}

/// Handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

#[derive(Debug)]
struct Entry<P> {
    key: (RefTime, usize, u8, u64),
    group: Option<(CancelGroup, u64)>,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<P> Ord for Entry<P> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.key.cmp(&o.key)
    }
}

/// A fired entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired<P> {
    pub id: EventId,
    pub time: RefTime,
    pub node: usize,
    pub rank: u8,
    pub payload: P,
}

/// Priority queue of future events.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Entry<P>>>,
    generations: HashMap<CancelGroup, u64>,
    cancelled: std::collections::HashSet<u64>,
    now: RefTime,
    seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            generations: HashMap::new(),
            cancelled: Default::default(),
            now: RefTime::ZERO,
            seq: 0,
        }
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> RefTime {
        self.now
    }

    /// Enqueues `payload` for `node` at `at`; lower `rank` fires first among equal times.
    pub fn schedule(
        &mut self,
        at: RefTime,
        node: usize,
        rank: u8,
        payload: P,
        group: Option<CancelGroup>,
    ) -> Result<EventId, EngineError> {
        if at < self.now {
            return Err(EngineError::InThePast { at, now: self.now });
        }
        let seq = self.seq;
        self.seq += 1;
        let group = group.map(|g| (g, *self.generations.get(&g).unwrap_or(&0)));
        self.heap.push(Reverse(Entry { key: (at, node, rank, seq), group, payload }));
        Ok(EventId(seq))
    }

    /// Drops every pending entry of `group`.
    pub fn cancel_group(&mut self, group: CancelGroup) {
        *self.generations.entry(group).or_insert(0) += 1;
    }

    /// Drops a single pending entry.
    pub fn cancel(&mut self, id: EventId) {
        self.cancelled.insert(id.0);
    }

    fn live(&self, e: &Entry<P>) -> bool {
        if self.cancelled.contains(&e.key.3) {
            return false;
        }
        match e.group {
            Some((g, gen)) => *self.generations.get(&g).unwrap_or(&0) == gen,
            None => true,
        }
    }

    /// Time of the next live entry.
    pub fn peek_time(&mut self) -> Option<RefTime> {
        while let Some(Reverse(e)) = self.heap.peek() {
            if self.live(e) {
                return Some(e.key.0);
            }
            let Reverse(e) = self.heap.pop().unwrap();
            self.cancelled.remove(&e.key.3);
        }
        None
    }

    /// Removes and returns the next live entry, advancing the clock.
    pub fn pop(&mut self) -> Option<Fired<P>> {
        while let Some(Reverse(e)) = self.heap.pop() {
            if !self.live(&e) {
                self.cancelled.remove(&e.key.3);
                continue;
            }
            self.now = e.key.0;
            return Some(Fired {
                id: EventId(e.key.3),
                time: e.key.0,
                node: e.key.1,
                rank: e.key.2,
                payload: e.payload,
            });
        }
        None
    }

    pub fn is_empty(&mut self) -> bool {
        self.peek_time().is_none()
    }
}
