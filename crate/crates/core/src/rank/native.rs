//! Queue-based baselines implemented directly rather than as scoring programs.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Cache, Policy, PolicyFault};
use crate::list::{Handle, IndexList};
use crate::trace::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeKind {
    /// FIFO with one reference bit; referenced tails are reinserted once.
    FifoReinsertion,
    Sieve,
    S3Fifo,
    TwoQ,
}

impl NativeKind {
    pub const ALL: [NativeKind; 4] = [
        NativeKind::FifoReinsertion,
        NativeKind::Sieve,
        NativeKind::S3Fifo,
        NativeKind::TwoQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NativeKind::FifoReinsertion => "fifo_reinsertion",
            NativeKind::Sieve => "sieve",
            NativeKind::S3Fifo => "s3fifo",
            NativeKind::TwoQ => "twoq",
        }
    }

    pub fn build(self, capacity: u64) -> NativePolicy {
        match self {
            NativeKind::FifoReinsertion => NativePolicy::FifoReinsertion(Clock::default()),
            NativeKind::Sieve => NativePolicy::Sieve(Sieve::default()),
            NativeKind::S3Fifo => NativePolicy::S3Fifo(S3Fifo::new(capacity)),
            NativeKind::TwoQ => NativePolicy::TwoQ(TwoQ::new(capacity)),
        }
    }
}

impl fmt::Display for NativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NativeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        NativeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown native policy {s:?}"))
    }
}

pub enum NativePolicy {
    FifoReinsertion(Clock),
    Sieve(Sieve),
    S3Fifo(S3Fifo),
    TwoQ(TwoQ),
}

impl Policy for NativePolicy {
    fn make_room(
        &mut self,
        cache: &mut Cache,
        incoming: ObjectId,
        incoming_size: u64,
    ) -> Result<(), PolicyFault> {
        // Ghost membership is decided before this request's evictions can
        // push the entry out.
        if !cache.contains(incoming) {
            match self {
                NativePolicy::S3Fifo(p) => p.pending_from_ghost = p.ghost_take(incoming),
                NativePolicy::TwoQ(p) => p.pending_from_ghost = p.ghost_take(incoming),
                _ => {}
            }
        }
        while cache.used() + incoming_size > cache.capacity() && !cache.is_empty() {
            let victim = match self {
                NativePolicy::FifoReinsertion(p) => p.victim(),
                NativePolicy::Sieve(p) => p.victim(),
                NativePolicy::S3Fifo(p) => {
                    p.evict(cache)
                        .ok_or_else(|| PolicyFault::new("native policy lost track of residents"))?;
                    continue;
                }
                NativePolicy::TwoQ(p) => p.victim(),
            };
            let victim =
                victim.ok_or_else(|| PolicyFault::new("native policy lost track of residents"))?;
            cache.evict(victim);
        }
        Ok(())
    }

    fn on_insert(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        match self {
            NativePolicy::FifoReinsertion(p) => p.insert(id),
            NativePolicy::Sieve(p) => p.insert(id),
            NativePolicy::S3Fifo(p) => p.insert(cache, id),
            NativePolicy::TwoQ(p) => p.insert(cache, id),
        }
        Ok(())
    }

    fn on_access(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        match self {
            NativePolicy::FifoReinsertion(p) => p.access(id),
            NativePolicy::Sieve(p) => p.access(id),
            NativePolicy::S3Fifo(p) => p.access(cache, id),
            NativePolicy::TwoQ(p) => p.access(cache, id),
        }
        Ok(())
    }
}

/// FIFO where a referenced tail gets its bit cleared and returns to the head.
#[derive(Default)]
pub struct Clock {
    queue: IndexList<ObjectId>,
    entries: HashMap<ObjectId, (Handle, bool)>,
}

impl Clock {
    fn insert(&mut self, id: ObjectId) {
        let h = self.queue.push_head(id);
        self.entries.insert(id, (h, false));
    }

    fn access(&mut self, id: ObjectId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.1 = true;
        }
    }

    fn victim(&mut self) -> Option<ObjectId> {
        loop {
            let id = self.queue.pop_tail()?;
            let e = self.entries.get_mut(&id)?;
            if e.1 {
                e.1 = false;
                e.0 = self.queue.push_head(id);
            } else {
                self.entries.remove(&id);
                return Some(id);
            }
        }
    }
}

/// SIEVE: FIFO insertion with a hand that sweeps from tail to head, clearing
/// visited bits and evicting the first unvisited object it meets. Survivors
/// stay in place.
#[derive(Default)]
pub struct Sieve {
    queue: IndexList<ObjectId>,
    entries: HashMap<ObjectId, (Handle, bool)>,
    hand: Option<Handle>,
}

impl Sieve {
    fn insert(&mut self, id: ObjectId) {
        let h = self.queue.push_head(id);
        self.entries.insert(id, (h, false));
    }

    fn access(&mut self, id: ObjectId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.1 = true;
        }
    }

    fn victim(&mut self) -> Option<ObjectId> {
        let mut h = self.hand.or_else(|| self.queue.tail())?;
        loop {
            let id = *self.queue.get(h)?;
            let e = self.entries.get_mut(&id)?;
            if !e.1 {
                break;
            }
            e.1 = false;
            h = self.queue.towards_head(h).or_else(|| self.queue.tail())?;
        }
        self.hand = self.queue.towards_head(h);
        let id = self.queue.remove(h)?;
        self.entries.remove(&id);
        Some(id)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum S3Queue {
    Small,
    Main,
}

/// S3-FIFO: a small probationary FIFO (10% of capacity), a main FIFO with
/// a 2-bit reinsertion counter, and a ghost FIFO of ids evicted from the
/// small queue, bounded at 90% of capacity.
pub struct S3Fifo {
    capacity: u64,
    small: IndexList<ObjectId>,
    main: IndexList<ObjectId>,
    small_bytes: u64,
    main_bytes: u64,
    entries: HashMap<ObjectId, S3Entry>,
    ghost: VecDeque<(ObjectId, u64)>,
    /// Live ghost entries: id to (stamp, size).
    ghost_index: HashMap<ObjectId, (u64, u64)>,
    ghost_bytes: u64,
    ghost_stamp: u64,
    pending_from_ghost: bool,
}

struct S3Entry {
    queue: S3Queue,
    handle: Handle,
    freq: u8,
    /// Size charged to its queue at insertion.
    size: u64,
}

pub const S3FIFO_SMALL_FRACTION: f64 = 0.1;
pub const S3FIFO_GHOST_FRACTION: f64 = 0.9;
const S3FIFO_MAX_FREQ: u8 = 3;

impl S3Fifo {
    pub fn new(capacity: u64) -> Self {
        S3Fifo {
            capacity,
            small: IndexList::new(),
            main: IndexList::new(),
            small_bytes: 0,
            main_bytes: 0,
            entries: HashMap::new(),
            ghost: VecDeque::new(),
            ghost_index: HashMap::new(),
            ghost_bytes: 0,
            ghost_stamp: 0,
            pending_from_ghost: false,
        }
    }

    fn small_target(&self) -> u64 {
        ((self.capacity as f64 * S3FIFO_SMALL_FRACTION).floor() as u64).max(1)
    }

    fn ghost_limit(&self) -> u64 {
        (self.capacity as f64 * S3FIFO_GHOST_FRACTION).floor() as u64
    }

    fn ghost_take(&mut self, id: ObjectId) -> bool {
        match self.ghost_index.remove(&id) {
            Some((_, size)) => {
                self.ghost_bytes -= size;
                true
            }
            None => false,
        }
    }

    fn ghost_push(&mut self, id: ObjectId, size: u64) {
        self.ghost_stamp += 1;
        self.ghost_index.insert(id, (self.ghost_stamp, size));
        self.ghost.push_back((id, self.ghost_stamp));
        self.ghost_bytes += size;
        while self.ghost_bytes > self.ghost_limit() {
            let Some((old, stamp)) = self.ghost.pop_front() else {
                break;
            };
            if let Some(&(s, sz)) = self.ghost_index.get(&old) {
                if s == stamp {
                    self.ghost_index.remove(&old);
                    self.ghost_bytes -= sz;
                }
            }
        }
    }

    fn insert(&mut self, cache: &Cache, id: ObjectId) {
        let size = cache.meta(id).map_or(1, |m| m.size);
        let (queue, handle) = if std::mem::take(&mut self.pending_from_ghost) {
            self.main_bytes += size;
            (S3Queue::Main, self.main.push_head(id))
        } else {
            self.small_bytes += size;
            (S3Queue::Small, self.small.push_head(id))
        };
        self.entries.insert(
            id,
            S3Entry {
                queue,
                handle,
                freq: 0,
                size,
            },
        );
    }

    fn access(&mut self, _cache: &Cache, id: ObjectId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.freq = (e.freq + 1).min(S3FIFO_MAX_FREQ);
        }
    }

    /// One eviction step: drains the small queue until an object leaves to
    /// the ghost, promoting referenced tails into main (which evicts from
    /// main when it overflows its share), or evicts from main directly.
    fn evict(&mut self, cache: &mut Cache) -> Option<()> {
        if self.small_bytes < self.small_target() && !self.main.is_empty() {
            return self.evict_main(cache);
        }
        while let Some(id) = self.small.pop_tail() {
            let e = self.entries.get_mut(&id)?;
            self.small_bytes -= e.size;
            if e.freq >= 1 {
                e.freq = 0;
                e.queue = S3Queue::Main;
                e.handle = self.main.push_head(id);
                self.main_bytes += e.size;
                if self.main_bytes > self.capacity.saturating_sub(self.small_target()) {
                    self.evict_main(cache)?;
                }
                continue;
            }
            let size = e.size;
            self.entries.remove(&id);
            self.ghost_push(id, size);
            cache.evict(id);
            return Some(());
        }
        Some(())
    }

    fn evict_main(&mut self, cache: &mut Cache) -> Option<()> {
        loop {
            let id = self.main.pop_tail()?;
            let e = self.entries.get_mut(&id)?;
            if e.freq >= 1 {
                e.freq -= 1;
                e.handle = self.main.push_head(id);
                continue;
            }
            self.main_bytes -= e.size;
            self.entries.remove(&id);
            cache.evict(id);
            return Some(());
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum TwoQQueue {
    In,
    Main,
}

/// Full 2Q: new objects enter a FIFO `A1in` (25% of capacity); objects
/// evicted from it are remembered in the ghost `A1out` (50% of capacity, in
/// entries); a miss that hits `A1out` enters the LRU `Am`.
pub struct TwoQ {
    capacity: u64,
    a1in: IndexList<ObjectId>,
    am: IndexList<ObjectId>,
    in_bytes: u64,
    /// Queue, list handle and the size charged to `A1in` at insertion.
    entries: HashMap<ObjectId, (TwoQQueue, Handle, u64)>,
    ghost: VecDeque<(ObjectId, u64)>,
    ghost_index: HashMap<ObjectId, u64>,
    ghost_stamp: u64,
    pending_from_ghost: bool,
}

pub const TWOQ_IN_FRACTION: f64 = 0.25;
pub const TWOQ_GHOST_FRACTION: f64 = 0.5;

impl TwoQ {
    pub fn new(capacity: u64) -> Self {
        TwoQ {
            capacity,
            a1in: IndexList::new(),
            am: IndexList::new(),
            in_bytes: 0,
            entries: HashMap::new(),
            ghost: VecDeque::new(),
            ghost_index: HashMap::new(),
            ghost_stamp: 0,
            pending_from_ghost: false,
        }
    }

    fn in_target(&self) -> u64 {
        ((self.capacity as f64 * TWOQ_IN_FRACTION).floor() as u64).max(1)
    }

    fn ghost_limit(&self) -> usize {
        ((self.capacity as f64 * TWOQ_GHOST_FRACTION).floor() as usize).max(1)
    }

    fn ghost_take(&mut self, id: ObjectId) -> bool {
        self.ghost_index.remove(&id).is_some()
    }

    fn ghost_push(&mut self, id: ObjectId) {
        self.ghost_stamp += 1;
        self.ghost_index.insert(id, self.ghost_stamp);
        self.ghost.push_back((id, self.ghost_stamp));
        while self.ghost_index.len() > self.ghost_limit() {
            let Some((old, stamp)) = self.ghost.pop_front() else {
                break;
            };
            if self.ghost_index.get(&old) == Some(&stamp) {
                self.ghost_index.remove(&old);
            }
        }
    }

    fn insert(&mut self, cache: &Cache, id: ObjectId) {
        let size = cache.meta(id).map_or(1, |m| m.size);
        let entry = if std::mem::take(&mut self.pending_from_ghost) {
            (TwoQQueue::Main, self.am.push_head(id), 0)
        } else {
            self.in_bytes += size;
            (TwoQQueue::In, self.a1in.push_head(id), size)
        };
        self.entries.insert(id, entry);
    }

    fn access(&mut self, _cache: &Cache, id: ObjectId) {
        if let Some(e) = self.entries.get_mut(&id) {
            if e.0 == TwoQQueue::Main {
                self.am.remove(e.1);
                e.1 = self.am.push_head(id);
            }
        }
    }

    fn victim(&mut self) -> Option<ObjectId> {
        if self.in_bytes > self.in_target() || self.am.is_empty() {
            let id = self.a1in.pop_tail()?;
            let (_, _, size) = self.entries.remove(&id)?;
            self.in_bytes -= size;
            self.ghost_push(id);
            return Some(id);
        }
        let id = self.am.pop_tail()?;
        self.entries.remove(&id);
        Some(id)
    }
}
