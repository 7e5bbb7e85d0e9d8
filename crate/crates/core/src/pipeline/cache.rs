//! Fully associative LRU cache over lookup results.

use std::collections::HashMap;

use super::Key;

struct Slot {
    value: Option<u32>,
    last_use: u64,
}

pub struct LruCache {
    capacity: usize,
    slots: HashMap<Key, Slot>,
    tick: u64,
}

impl LruCache {
    pub fn new(capacity: usize) -> Self {
        LruCache {
            capacity,
            slots: HashMap::with_capacity(capacity),
            tick: 0,
        }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    /// Cached result for `key`, refreshing its recency on a hit.
    pub fn get(&mut self, key: &Key) -> Option<Option<u32>> {
        self.tick += 1;
        let tick = self.tick;
        self.slots.get_mut(key).map(|s| {
            s.last_use = tick;
            s.value
        })
    }

    /// Inserts or refreshes `key`, evicting the least recently used entry
    /// when full. No-op at zero capacity.
    pub fn insert(&mut self, key: Key, value: Option<u32>) {
        if self.capacity == 0 {
            return;
        }
        self.tick += 1;
        if let Some(s) = self.slots.get_mut(&key) {
            s.value = value;
            s.last_use = self.tick;
            return;
        }
        if self.slots.len() >= self.capacity {
            // unique ticks make the victim deterministic
            let victim = self
                .slots
                .iter()
                .min_by_key(|(_, s)| s.last_use)
                .map(|(k, _)| *k)
                .expect("cache is non-empty");
            self.slots.remove(&victim);
        }
        self.slots.insert(
            key,
            Slot {
                value,
                last_use: self.tick,
            },
        );
    }

    /// Drops every entry matching the predicate; returns how many went.
    pub fn invalidate<F: Fn(&Key) -> bool>(&mut self, pred: F) -> usize {
        let before = self.slots.len();
        self.slots.retain(|k, _| !pred(k));
        before - self.slots.len()
    }
}
