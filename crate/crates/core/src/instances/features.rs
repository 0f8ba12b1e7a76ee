//! Fixed 15-dimensional trace features computed over a request prefix.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::stats::nearest_rank;
use crate::trace::{ObjectId, Request};

/// Version tag of the feature list; stored in model files.
pub const FEATURE_VERSION: &str = "v1";

/// Default prefix length used for feature extraction.
pub const DEFAULT_PREFIX: usize = 50_000;

pub const NUM_FEATURES: usize = 15;

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "total_requests",
    "unique_objects",
    "unique_ratio",
    "one_hit_wonder_fraction",
    "mean_object_size",
    "max_object_size",
    "p50_object_size",
    "p90_object_size",
    "mean_interarrival",
    "p50_interarrival",
    "p90_interarrival",
    "mean_reuse_distance",
    "access_count_gini",
    "top1pct_request_fraction",
    "footprint_fraction",
];

/// Index constants into [`FeatureVector`].
pub mod idx {
    pub const TOTAL_REQUESTS: usize = 0;
    pub const UNIQUE_OBJECTS: usize = 1;
    pub const UNIQUE_RATIO: usize = 2;
    pub const ONE_HIT_WONDER: usize = 3;
    pub const MEAN_SIZE: usize = 4;
    pub const MAX_SIZE: usize = 5;
    pub const P50_SIZE: usize = 6;
    pub const P90_SIZE: usize = 7;
    pub const MEAN_INTERARRIVAL: usize = 8;
    pub const P50_INTERARRIVAL: usize = 9;
    pub const P90_INTERARRIVAL: usize = 10;
    pub const MEAN_REUSE_DISTANCE: usize = 11;
    pub const GINI: usize = 12;
    pub const TOP1PCT: usize = 13;
    pub const FOOTPRINT_FRACTION: usize = 14;
}

/// Indices of features that are ratios in [0, 1].
pub const RATIO_FEATURES: [usize; 5] = [
    idx::UNIQUE_RATIO,
    idx::ONE_HIT_WONDER,
    idx::GINI,
    idx::TOP1PCT,
    idx::FOOTPRINT_FRACTION,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Binary indexed tree over request positions, used to count distinct ids
/// between two accesses.
struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, pos: usize, delta: i64) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `0..pos`.
    fn prefix(&self, pos: usize) -> i64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn percentile_sorted(sorted: &[u64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted[nearest_rank(p, sorted.len() as u64) as usize - 1] as f64
}

fn mean(values: impl Iterator<Item = u64>) -> f64 {
    let (sum, n) = values.fold((0u128, 0u64), |(s, n), v| (s + v as u128, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Gini coefficient of non-negative values; 0 for empty or all-zero input.
pub fn gini(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let total: f64 = v.iter().map(|&x| x as f64).sum();
    if v.is_empty() || total == 0.0 {
        return 0.0;
    }
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, &x)| (i as f64 + 1.0) * x as f64)
        .sum();
    (2.0 * weighted / (n * total) - (n + 1.0) / n).clamp(0.0, 1.0)
}

struct ObjectStats {
    count: u64,
    size: u64,
    last_pos: usize,
}

/// Features of the first `min(prefix_len, trace.len())` requests.
///
/// Object sizes are last-seen sizes over distinct objects. Interarrival gaps
/// are vtime differences between consecutive accesses to one object, and the
/// reuse distance of such a pair is the number of distinct other ids
/// requested in between, computed exactly for every pair.
pub fn extract_features(trace: &[Request], prefix_len: usize) -> FeatureVector {
    let t = &trace[..prefix_len.min(trace.len())];
    let mut objects: HashMap<ObjectId, ObjectStats> = HashMap::new();
    let mut gaps: Vec<u64> = Vec::new();
    let mut reuse_total: u128 = 0;
    let mut fenwick = Fenwick::new(t.len());
    let mut total_bytes: u128 = 0;
    for (pos, r) in t.iter().enumerate() {
        total_bytes += r.size as u128;
        match objects.get_mut(&r.object_id) {
            Some(o) => {
                gaps.push(r.vtime.saturating_sub(t[o.last_pos].vtime));
                // Positions in (last_pos, pos) that are the latest access of their id.
                let distinct = fenwick.prefix(pos) - fenwick.prefix(o.last_pos + 1);
                reuse_total += distinct as u128;
                fenwick.add(o.last_pos, -1);
                o.count += 1;
                o.size = r.size;
                o.last_pos = pos;
            }
            None => {
                objects.insert(
                    r.object_id,
                    ObjectStats {
                        count: 1,
                        size: r.size,
                        last_pos: pos,
                    },
                );
            }
        }
        fenwick.add(pos, 1);
    }

    let total = t.len() as f64;
    let unique = objects.len() as f64;
    let ratio = |a: f64, b: f64| {
        if b == 0.0 {
            0.0
        } else {
            (a / b).clamp(0.0, 1.0)
        }
    };

    let mut sizes: Vec<u64> = objects.values().map(|o| o.size).collect();
    sizes.sort_unstable();
    let mut counts: Vec<u64> = objects.values().map(|o| o.count).collect();
    counts.sort_unstable();
    gaps.sort_unstable();

    let one_hit = counts.iter().filter(|&&c| c == 1).count() as f64;
    let top_k = ((unique * 0.01).ceil() as usize).max(1).min(counts.len());
    let top_requests: u64 = counts.iter().rev().take(top_k).sum();
    let footprint: u128 = sizes.iter().map(|&s| s as u128).sum();

    let mut f = [0.0; NUM_FEATURES];
    f[idx::TOTAL_REQUESTS] = total;
    f[idx::UNIQUE_OBJECTS] = unique;
    f[idx::UNIQUE_RATIO] = ratio(unique, total);
    f[idx::ONE_HIT_WONDER] = ratio(one_hit, unique);
    f[idx::MEAN_SIZE] = mean(sizes.iter().copied());
    f[idx::MAX_SIZE] = sizes.last().copied().unwrap_or(0) as f64;
    f[idx::P50_SIZE] = percentile_sorted(&sizes, 0.5);
    f[idx::P90_SIZE] = percentile_sorted(&sizes, 0.9);
    f[idx::MEAN_INTERARRIVAL] = mean(gaps.iter().copied());
    f[idx::P50_INTERARRIVAL] = percentile_sorted(&gaps, 0.5);
    f[idx::P90_INTERARRIVAL] = percentile_sorted(&gaps, 0.9);
    f[idx::MEAN_REUSE_DISTANCE] = if gaps.is_empty() {
        0.0
    } else {
        reuse_total as f64 / gaps.len() as f64
    };
    f[idx::GINI] = gini(&counts);
    f[idx::TOP1PCT] = ratio(top_requests as f64, total);
    f[idx::FOOTPRINT_FRACTION] = ratio(footprint as f64, total_bytes as f64);
    FeatureVector(f)
}

/// Extracts features of many traces in parallel, preserving order.
pub fn extract_many(traces: &[Vec<Request>], prefix_len: usize) -> Vec<FeatureVector> {
    traces
        .par_iter()
        .map(|t| extract_features(t, prefix_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_csv_str, summarize, ObjectId};
    use crate::workloads::suite;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn trace_of(ids: &[u64]) -> Vec<Request> {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| Request {
                vtime: i as u64,
                object_id: ObjectId(id),
                size: 10 + id,
            })
            .collect()
    }

    #[test]
    fn scan_has_all_one_hit_wonders() {
        let f = extract_features(&trace_of(&(0..500).collect::<Vec<_>>()), DEFAULT_PREFIX);
        assert_eq!(f.get(idx::ONE_HIT_WONDER), 1.0);
        assert_eq!(f.get(idx::UNIQUE_RATIO), 1.0);
        assert_eq!(f.get(idx::MEAN_INTERARRIVAL), 0.0);
    }

    #[test]
    fn single_object_trace() {
        let f = extract_features(&trace_of(&[7; 400]), DEFAULT_PREFIX);
        assert_eq!(f.get(idx::UNIQUE_RATIO), 1.0 / 400.0);
        assert_eq!(f.get(idx::TOP1PCT), 1.0);
        assert_eq!(f.get(idx::MEAN_REUSE_DISTANCE), 0.0);
        assert_eq!(f.get(idx::MEAN_INTERARRIVAL), 1.0);
        assert_eq!(f.get(idx::GINI), 0.0);
    }

    #[test]
    fn hand_computed_small_trace() {
        // a b c a b a: gaps a 3, b 3, a 2; distinct ids between: {b,c}, {c,a}, {b}.
        let t = parse_csv_str("a,10\nb,20\nc,30\na,10\nb,20\na,10").unwrap();
        let f = extract_features(&t, DEFAULT_PREFIX);
        assert_eq!(f.get(idx::MEAN_INTERARRIVAL), 8.0 / 3.0);
        assert_eq!(f.get(idx::P50_INTERARRIVAL), 3.0);
        assert_eq!(f.get(idx::MEAN_REUSE_DISTANCE), 5.0 / 3.0);
        assert_eq!(f.get(idx::P50_SIZE), 20.0);
        assert_eq!(f.get(idx::FOOTPRINT_FRACTION), 60.0 / 100.0);
        // Counts 3, 2, 1: Gini = 2*(1*1 + 2*2 + 3*3)/(3*6) - 4/3 = 2/9.
        assert!((f.get(idx::GINI) - 2.0 / 9.0).abs() < 1e-12);
    }

    /// Two-pass oracle for unique count, one-hit wonders, mean and max size.
    #[test]
    fn suite_features_match_brute_force() {
        for w in suite() {
            let t = w.generate().unwrap();
            let f = extract_features(&t, DEFAULT_PREFIX);
            let ids: HashSet<ObjectId> = t.iter().map(|r| r.object_id).collect();
            let mut last_size = HashMap::new();
            let mut counts = HashMap::new();
            for r in &t {
                last_size.insert(r.object_id, r.size);
                *counts.entry(r.object_id).or_insert(0u64) += 1;
            }
            let ohw = counts.values().filter(|&&c| c == 1).count() as f64 / ids.len() as f64;
            let mean_size = last_size.values().sum::<u64>() as f64 / ids.len() as f64;
            let max_size = *last_size.values().max().unwrap() as f64;
            assert_eq!(f.get(idx::UNIQUE_OBJECTS), ids.len() as f64, "{}", w.name);
            assert_eq!(f.get(idx::ONE_HIT_WONDER), ohw, "{}", w.name);
            assert!(
                (f.get(idx::MEAN_SIZE) - mean_size).abs() <= 1e-9 * mean_size,
                "{}",
                w.name
            );
            assert_eq!(f.get(idx::MAX_SIZE), max_size, "{}", w.name);
            assert_eq!(
                f.get(idx::ONE_HIT_WONDER),
                summarize(&t).one_hit_wonder_fraction
            );
        }
    }

    /// Quadratic reuse-distance oracle.
    fn naive_mean_reuse(t: &[Request]) -> f64 {
        let (mut sum, mut n) = (0usize, 0usize);
        for i in 0..t.len() {
            if let Some(j) = (0..i).rev().find(|&j| t[j].object_id == t[i].object_id) {
                sum += t[j + 1..i]
                    .iter()
                    .map(|r| r.object_id)
                    .collect::<HashSet<_>>()
                    .len();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    proptest! {
        #[test]
        fn reuse_distance_matches_naive(ids in prop::collection::vec(0u64..12, 1..120)) {
            let t = trace_of(&ids);
            let f = extract_features(&t, DEFAULT_PREFIX);
            prop_assert!((f.get(idx::MEAN_REUSE_DISTANCE) - naive_mean_reuse(&t)).abs() < 1e-9);
        }

        #[test]
        fn features_finite_and_ratios_bounded(ids in prop::collection::vec(0u64..50, 1..300)) {
            let f = extract_features(&trace_of(&ids), DEFAULT_PREFIX);
            prop_assert!(f.0.iter().all(|x| x.is_finite()));
            for i in RATIO_FEATURES {
                prop_assert!((0.0..=1.0).contains(&f.get(i)));
            }
        }

        #[test]
        fn prefix_ignores_suffix(
            ids in prop::collection::vec(0u64..30, 1..200),
            tail in prop::collection::vec(0u64..30, 0..100),
            prefix in 1usize..200,
        ) {
            let a = trace_of(&ids);
            let b = trace_of(&[ids.clone(), tail].concat());
            let p = prefix.min(ids.len());
            prop_assert_eq!(extract_features(&a, p), extract_features(&b, p));
        }
    }
}
