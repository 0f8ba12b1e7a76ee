//! Bounded FIFO of metadata for recently evicted objects.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::trace::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionRecord {
    pub object_id: ObjectId,
    pub eviction_vtime: u64,
    pub count_at_eviction: u64,
    /// `eviction_vtime - addition_vtime` of the evicted residency.
    pub age_at_eviction: u64,
}

/// Keeps at most `capacity` live records, dropping the oldest first. Only the
/// most recent record per object is retained.
#[derive(Clone, Debug)]
pub struct History {
    capacity: usize,
    records: HashMap<ObjectId, (EvictionRecord, u64)>,
    order: VecDeque<(ObjectId, u64)>,
    stamp: u64,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        History {
            capacity,
            records: HashMap::new(),
            order: VecDeque::new(),
            stamp: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&EvictionRecord> {
        self.records.get(&id).map(|(r, _)| r)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.records.contains_key(&id)
    }

    pub fn push(&mut self, record: EvictionRecord) {
        if self.capacity == 0 {
            return;
        }
        self.stamp += 1;
        self.records.insert(record.object_id, (record, self.stamp));
        self.order.push_back((record.object_id, self.stamp));
        while self.records.len() > self.capacity {
            let Some((id, stamp)) = self.order.pop_front() else {
                break;
            };
            if self.records.get(&id).is_some_and(|(_, s)| *s == stamp) {
                self.records.remove(&id);
            }
        }
        // Entries superseded by a newer record or by `remove` linger in the
        // queue; compact once they dominate it.
        if self.order.len() > 2 * self.capacity + 16 {
            let records = &self.records;
            self.order
                .retain(|(id, s)| records.get(id).is_some_and(|(_, cur)| cur == s));
        }
    }

    pub fn remove(&mut self, id: ObjectId) -> Option<EvictionRecord> {
        self.records.remove(&id).map(|(r, _)| r)
    }
}
