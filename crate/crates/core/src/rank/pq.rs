//! Binary min-heap with a key index, supporting in-place re-prioritization.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::Hash;

#[derive(Clone, Copy, Debug)]
struct Entry<K> {
    priority: f64,
    seq: u64,
    key: K,
}

impl<K> Entry<K> {
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Min-heap ordered by `(priority, seq)`. Each key appears at most once.
///
/// Pop order is ascending priority; equal priorities pop the lower sequence
/// number first.
#[derive(Clone, Debug)]
pub struct IndexedPriorityQueue<K> {
    heap: Vec<Entry<K>>,
    pos: HashMap<K, usize>,
}

impl<K: Copy + Eq + Hash> Default for IndexedPriorityQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Copy + Eq + Hash> IndexedPriorityQueue<K> {
    pub fn new() -> Self {
        IndexedPriorityQueue {
            heap: Vec::new(),
            pos: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, key: K) -> bool {
        self.pos.contains_key(&key)
    }

    pub fn priority(&self, key: K) -> Option<f64> {
        self.pos.get(&key).map(|&i| self.heap[i].priority)
    }

    /// Inserts `key`, or repositions it if already present.
    pub fn push(&mut self, key: K, priority: f64, seq: u64) {
        let e = Entry { priority, seq, key };
        match self.pos.get(&key) {
            Some(&i) => {
                let old = self.heap[i];
                self.heap[i] = e;
                if e.cmp_rank(&old) == Ordering::Less {
                    self.sift_up(i);
                } else {
                    self.sift_down(i);
                }
            }
            None => {
                self.heap.push(e);
                let i = self.heap.len() - 1;
                self.pos.insert(key, i);
                self.sift_up(i);
            }
        }
    }

    pub fn peek(&self) -> Option<(K, f64)> {
        self.heap.first().map(|e| (e.key, e.priority))
    }

    pub fn pop(&mut self) -> Option<(K, f64)> {
        let top = *self.heap.first()?;
        self.remove_at(0);
        Some((top.key, top.priority))
    }

    pub fn remove(&mut self, key: K) -> Option<f64> {
        let i = *self.pos.get(&key)?;
        let p = self.heap[i].priority;
        self.remove_at(i);
        Some(p)
    }

    fn remove_at(&mut self, i: usize) {
        let last = self.heap.len() - 1;
        self.swap(i, last);
        let e = self.heap.pop().expect("non-empty");
        self.pos.remove(&e.key);
        if i < self.heap.len() {
            self.sift_down(i);
            self.sift_up(i);
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        self.heap.swap(a, b);
        self.pos.insert(self.heap[a].key, a);
        self.pos.insert(self.heap[b].key, b);
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i].cmp_rank(&self.heap[parent]) == Ordering::Less {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        loop {
            let l = 2 * i + 1;
            let r = l + 1;
            let mut m = i;
            if l < self.heap.len() && self.heap[l].cmp_rank(&self.heap[m]) == Ordering::Less {
                m = l;
            }
            if r < self.heap.len() && self.heap[r].cmp_rank(&self.heap[m]) == Ordering::Less {
                m = r;
            }
            if m == i {
                break;
            }
            self.swap(i, m);
            i = m;
        }
    }
}
