//! Single-slot latest-value cells shared between channel tasks.

use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Stamped<T> {
    pub value: T,
    pub seq: u64,
    pub stamp: Instant,
}

/// Holds the most recent value of one channel. Readers always get a
/// complete `(value, seq)` pair and the sequence number never decreases.
#[derive(Debug)]
pub struct LatestValueRegister<T> {
    slot: Mutex<Option<Stamped<T>>>,
    changed: Condvar,
}

impl<T> Default for LatestValueRegister<T> {
    fn default() -> Self {
        LatestValueRegister {
            slot: Mutex::new(None),
            changed: Condvar::new(),
        }
    }
}

impl<T: Clone> LatestValueRegister<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Option<Stamped<T>>> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores `value` under the next sequence number and returns it.
    pub fn publish(&self, value: T) -> u64 {
        let mut slot = self.lock();
        let seq = slot.as_ref().map_or(1, |s| s.seq + 1);
        *slot = Some(Stamped {
            value,
            seq,
            stamp: Instant::now(),
        });
        self.changed.notify_all();
        seq
    }

    /// Stores `value` only if `seq` is newer than the held one (latest wins).
    pub fn offer(&self, seq: u64, value: T) -> bool {
        let mut slot = self.lock();
        if slot.as_ref().is_some_and(|s| s.seq >= seq) {
            return false;
        }
        *slot = Some(Stamped {
            value,
            seq,
            stamp: Instant::now(),
        });
        self.changed.notify_all();
        true
    }

    pub fn latest(&self) -> Option<Stamped<T>> {
        self.lock().clone()
    }

    /// Sequence number of the held value, 0 when empty.
    pub fn seq(&self) -> u64 {
        self.lock().as_ref().map_or(0, |s| s.seq)
    }

    /// Blocks until a value with `seq >= min_seq` is held or `timeout` passes.
    pub fn wait_for(&self, min_seq: u64, timeout: Duration) -> Option<Stamped<T>> {
        let deadline = Instant::now() + timeout;
        let mut slot = self.lock();
        loop {
            if let Some(s) = slot.as_ref().filter(|s| s.seq >= min_seq) {
                return Some(s.clone());
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            slot = self
                .changed
                .wait_timeout(slot, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}
