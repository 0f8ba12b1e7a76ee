//! Exact order statistics over the resident set.

use crate::dsl::Stat;

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct TreapNode {
    key: u64,
    mult: u64,
    /// Total multiplicity of the subtree rooted here.
    size: u64,
    prio: u64,
    left: u32,
    right: u32,
}

/// Multiset of integers with `O(log n)` expected insert, remove and rank
/// queries. Implemented as a treap with per-key multiplicities; heap
/// priorities come from a hashed allocation counter so the structure is
/// deterministic.
#[derive(Clone, Debug)]
pub struct OrderStatMultiset {
    nodes: Vec<TreapNode>,
    free: Vec<u32>,
    root: u32,
    len: u64,
    salt: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Default for OrderStatMultiset {
    fn default() -> Self {
        Self::new()
    }
}

impl OrderStatMultiset {
    pub fn new() -> Self {
        OrderStatMultiset {
            nodes: Vec::new(),
            free: Vec::new(),
            root: NIL,
            len: 0,
            salt: 0,
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn size(&self, t: u32) -> u64 {
        if t == NIL {
            0
        } else {
            self.nodes[t as usize].size
        }
    }

    fn pull(&mut self, t: u32) {
        let n = &self.nodes[t as usize];
        let s = n.mult + self.size(n.left) + self.size(n.right);
        self.nodes[t as usize].size = s;
    }

    fn alloc(&mut self, key: u64) -> u32 {
        self.salt = self.salt.wrapping_add(1);
        let node = TreapNode {
            key,
            mult: 1,
            size: 1,
            prio: splitmix(self.salt),
            left: NIL,
            right: NIL,
        };
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn rotate_right(&mut self, t: u32) -> u32 {
        let l = self.nodes[t as usize].left;
        self.nodes[t as usize].left = self.nodes[l as usize].right;
        self.nodes[l as usize].right = t;
        self.pull(t);
        self.pull(l);
        l
    }

    fn rotate_left(&mut self, t: u32) -> u32 {
        let r = self.nodes[t as usize].right;
        self.nodes[t as usize].right = self.nodes[r as usize].left;
        self.nodes[r as usize].left = t;
        self.pull(t);
        self.pull(r);
        r
    }

    fn insert_at(&mut self, t: u32, key: u64) -> u32 {
        if t == NIL {
            return self.alloc(key);
        }
        let k = self.nodes[t as usize].key;
        if key == k {
            self.nodes[t as usize].mult += 1;
            self.nodes[t as usize].size += 1;
            return t;
        }
        if key < k {
            let l = self.insert_at(self.nodes[t as usize].left, key);
            self.nodes[t as usize].left = l;
            self.pull(t);
            if self.nodes[l as usize].prio > self.nodes[t as usize].prio {
                return self.rotate_right(t);
            }
        } else {
            let r = self.insert_at(self.nodes[t as usize].right, key);
            self.nodes[t as usize].right = r;
            self.pull(t);
            if self.nodes[r as usize].prio > self.nodes[t as usize].prio {
                return self.rotate_left(t);
            }
        }
        t
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            self.pull(a);
            a
        } else {
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            self.pull(b);
            b
        }
    }

    /// Returns the new subtree root and whether `key` was present.
    fn remove_at(&mut self, t: u32, key: u64) -> (u32, bool) {
        if t == NIL {
            return (NIL, false);
        }
        let k = self.nodes[t as usize].key;
        if key == k {
            let n = &mut self.nodes[t as usize];
            if n.mult > 1 {
                n.mult -= 1;
                n.size -= 1;
                return (t, true);
            }
            let (l, r) = (n.left, n.right);
            self.free.push(t);
            return (self.merge(l, r), true);
        }
        let found = if key < k {
            let (l, f) = self.remove_at(self.nodes[t as usize].left, key);
            self.nodes[t as usize].left = l;
            f
        } else {
            let (r, f) = self.remove_at(self.nodes[t as usize].right, key);
            self.nodes[t as usize].right = r;
            f
        };
        if found {
            self.pull(t);
        }
        (t, found)
    }

    pub fn insert(&mut self, key: u64) {
        self.root = self.insert_at(self.root, key);
        self.len += 1;
    }

    /// Removes one copy of `key`; returns whether it was present.
    pub fn remove(&mut self, key: u64) -> bool {
        let (root, found) = self.remove_at(self.root, key);
        self.root = root;
        if found {
            self.len -= 1;
        }
        found
    }

    /// The `rank`-th smallest element, 1-based, counting multiplicity.
    pub fn kth(&self, rank: u64) -> Option<u64> {
        if rank == 0 || rank > self.len {
            return None;
        }
        let mut t = self.root;
        let mut k = rank;
        while t != NIL {
            let n = &self.nodes[t as usize];
            let ls = self.size(n.left);
            if k <= ls {
                t = n.left;
            } else if k <= ls + n.mult {
                return Some(n.key);
            } else {
                k -= ls + n.mult;
                t = n.right;
            }
        }
        None
    }

    pub fn min(&self) -> Option<u64> {
        self.kth(1)
    }

    pub fn max(&self) -> Option<u64> {
        self.kth(self.len)
    }

    /// Ascending contents, expanding multiplicities.
    pub fn to_sorted_vec(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.len as usize);
        let mut stack = Vec::new();
        let mut t = self.root;
        while t != NIL || !stack.is_empty() {
            while t != NIL {
                stack.push(t);
                t = self.nodes[t as usize].left;
            }
            let u = stack.pop().expect("stack non-empty");
            let n = &self.nodes[u as usize];
            out.extend(std::iter::repeat_n(n.key, n.mult as usize));
            t = n.right;
        }
        out
    }
}

/// Nearest-rank index for quantile `p` over `n` items: the smallest rank `r`
/// with `r / n >= p`, clamped to `1..=n`. The small slack absorbs rounding in
/// `p * n` (so `0.7 * 10` selects rank 7, not 8).
pub fn nearest_rank(p: f64, n: u64) -> u64 {
    let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    let r = (p * n as f64 - 1e-9).ceil();
    (r.max(1.0) as u64).min(n)
}

/// The three resident-set multisets exposed to scoring programs.
#[derive(Clone, Debug, Default)]
pub struct AggregateStats {
    pub counts: OrderStatMultiset,
    pub addition_vtimes: OrderStatMultiset,
    pub sizes: OrderStatMultiset,
}

impl AggregateStats {
    pub fn len(&self) -> u64 {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Nearest-rank percentile of `stat` at quantile `p`; `0` on an empty cache.
    ///
    /// Ages are `vtime - addition_vtime`, so the age of rank `r` (ascending)
    /// is taken from the addition vtime of rank `n - r + 1`. No per-tick
    /// update is needed.
    pub fn percentile(&self, stat: Stat, p: f64, vtime: u64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let r = nearest_rank(p, n);
        match stat {
            Stat::Counts => self.counts.kth(r).unwrap_or(0) as f64,
            Stat::Sizes => self.sizes.kth(r).unwrap_or(0) as f64,
            Stat::Ages => {
                let added = self.addition_vtimes.kth(n - r + 1).unwrap_or(vtime);
                vtime.saturating_sub(added) as f64
            }
        }
    }
}
