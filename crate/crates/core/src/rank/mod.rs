//! Rank policies: a scoring program plus a victim-selection mechanism.
//!
//! Lower scores are evicted first. Ties break by cache-insertion order, older
//! first. Every rank policy keeps an aging value `L_aging`, set to the score
//! of the most recent victim, which scoring programs may read.

pub mod native;
pub mod pq;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{ContextKind, Feature, FeatureSource, ScoreProgram, Stat};
use crate::engine::{Cache, ObjectMeta, Policy, PolicyFault};
use crate::trace::ObjectId;

pub use native::{NativeKind, NativePolicy};
pub use pq::IndexedPriorityQueue;

/// How victims are chosen from scored residents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mechanism {
    /// Keep every resident in a priority queue, rescored on insert and access.
    PriorityQueue,
    /// Score every resident at each eviction decision.
    FullSort,
    /// Score a uniform sample of residents at each eviction decision.
    SampleSort { sample_size: usize },
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::PriorityQueue => f.write_str("pq"),
            Mechanism::FullSort => f.write_str("fullsort"),
            Mechanism::SampleSort { sample_size } => write!(f, "samplesort:{sample_size}"),
        }
    }
}

impl FromStr for Mechanism {
    type Err = String;

    /// Accepts `pq`, `fullsort` or `samplesort:<S>` with `S >= 1`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pq" | "priorityqueue" => Ok(Mechanism::PriorityQueue),
            "fullsort" => Ok(Mechanism::FullSort),
            _ => {
                let n = s.strip_prefix("samplesort:").ok_or_else(|| {
                    format!("unknown mechanism {s:?} (expected pq, fullsort or samplesort:<S>)")
                })?;
                match n.parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(Mechanism::SampleSort { sample_size: k }),
                    _ => Err(format!("sample size must be a positive integer, got {n:?}")),
                }
            }
        }
    }
}

/// A named scoring program with its mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct RankSpec {
    pub name: String,
    pub program: Arc<ScoreProgram>,
    pub mechanism: Mechanism,
}

impl RankSpec {
    pub fn new(
        name: impl Into<String>,
        program: ScoreProgram,
        mechanism: Mechanism,
    ) -> Result<Self, String> {
        if program.kind() != ContextKind::RankScore {
            return Err(format!(
                "rank policies need a {} program, got {}",
                ContextKind::RankScore,
                program.kind()
            ));
        }
        if mechanism == (Mechanism::SampleSort { sample_size: 0 }) {
            return Err("sample size must be at least 1".into());
        }
        Ok(RankSpec {
            name: name.into(),
            program: Arc::new(program),
            mechanism,
        })
    }
}

/// Builtin scoring programs.
pub fn builtin_score_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "lru" => "vtime",
        "fifo" => "obj.addition_vtime",
        "lfu" => "obj.count",
        "mru" => "-vtime",
        "gdsf" => "L_aging + obj.count / obj.size",
        _ => return None,
    })
}

/// Binds the rank-score features of one resident object.
pub struct RankContext<'a> {
    pub cache: &'a Cache,
    pub id: ObjectId,
    pub meta: &'a ObjectMeta,
    pub aging: f64,
}

impl FeatureSource for RankContext<'_> {
    fn feature(&self, f: Feature) -> f64 {
        match f {
            Feature::Vtime => self.cache.vtime() as f64,
            Feature::Count => self.meta.count as f64,
            Feature::LastAccessVtime => self.meta.last_access_vtime as f64,
            Feature::AdditionVtime => self.meta.addition_vtime as f64,
            Feature::Size => self.meta.size as f64,
            Feature::AgingValue => self.aging,
            _ => 0.0,
        }
    }

    fn percentile(&self, stat: Stat, p: f64) -> f64 {
        self.cache.percentile(stat, p)
    }

    fn ghost_record(&self) -> Option<(f64, f64)> {
        self.cache
            .history_lookup(self.id)
            .map(|r| (r.count_at_eviction as f64, r.age_at_eviction as f64))
    }
}

/// How much a victim selection must free.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VictimDemand {
    Bytes(u64),
    Count(usize),
}

/// A rank policy bound to one simulation.
pub struct RankPolicy {
    spec: RankSpec,
    queue: IndexedPriorityQueue<ObjectId>,
    aging: f64,
    rng: ChaCha8Rng,
}

impl RankPolicy {
    pub fn new(spec: RankSpec, seed: u64) -> Self {
        RankPolicy {
            spec,
            queue: IndexedPriorityQueue::new(),
            aging: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn aging(&self) -> f64 {
        self.aging
    }

    pub fn spec(&self) -> &RankSpec {
        &self.spec
    }

    /// Scores one resident object against the current cache state.
    pub fn score(&self, cache: &Cache, id: ObjectId) -> Result<f64, PolicyFault> {
        let meta = cache
            .meta(id)
            .ok_or_else(|| PolicyFault::new(format!("scored non-resident object {id}")))?;
        cache.charge_evals(1)?;
        Ok(self.spec.program.evaluate(&RankContext {
            cache,
            id,
            meta,
            aging: self.aging,
        }))
    }

    /// Chooses victims in eviction order without evicting them. Under the
    /// priority-queue mechanism the chosen entries leave the queue, so the
    /// caller must evict them.
    ///
    /// For byte demands the shortest ascending prefix whose sizes cover the
    /// demand is returned; under sampling that prefix may fall short when the
    /// whole sample does.
    pub fn select_victims(
        &mut self,
        cache: &Cache,
        demand: VictimDemand,
    ) -> Result<Vec<ObjectId>, PolicyFault> {
        let mut ranked: Vec<(ObjectId, f64)> = Vec::new();
        let mut take = Taker::new(demand);
        match self.spec.mechanism {
            Mechanism::PriorityQueue => {
                while !take.done() {
                    let Some((id, p)) = self.queue.pop() else {
                        break;
                    };
                    take.add(cache, id);
                    ranked.push((id, p));
                }
            }
            Mechanism::FullSort => {
                let candidates = cache.residents().to_vec();
                ranked = self.rank(cache, &candidates)?;
                ranked.truncate(take.prefix_len(cache, &ranked));
            }
            Mechanism::SampleSort { sample_size } => {
                let n = cache.len();
                let m = sample_size.min(n);
                let picks = index::sample(&mut self.rng, n, m);
                let candidates: Vec<ObjectId> =
                    picks.iter().map(|i| cache.residents()[i]).collect();
                ranked = self.rank(cache, &candidates)?;
                ranked.truncate(take.prefix_len(cache, &ranked));
            }
        }
        if let Some((_, s)) = ranked.last() {
            self.aging = *s;
        }
        Ok(ranked.into_iter().map(|(id, _)| id).collect())
    }

    fn rank(&self, cache: &Cache, ids: &[ObjectId]) -> Result<Vec<(ObjectId, f64)>, PolicyFault> {
        let mut scored = Vec::with_capacity(ids.len());
        for &id in ids {
            let seq = cache.meta(id).map_or(0, |m| m.seq);
            scored.push((id, self.score(cache, id)?, seq));
        }
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
        Ok(scored.into_iter().map(|(id, s, _)| (id, s)).collect())
    }

    fn rescore(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        if self.spec.mechanism == Mechanism::PriorityQueue {
            let s = self.score(cache, id)?;
            let seq = cache.meta(id).map_or(0, |m| m.seq);
            self.queue.push(id, s, seq);
        }
        Ok(())
    }
}

struct Taker {
    demand: VictimDemand,
    freed: u64,
    count: usize,
}

impl Taker {
    fn new(demand: VictimDemand) -> Self {
        Taker {
            demand,
            freed: 0,
            count: 0,
        }
    }

    fn done(&self) -> bool {
        match self.demand {
            VictimDemand::Bytes(b) => self.freed >= b,
            VictimDemand::Count(k) => self.count >= k,
        }
    }

    fn add(&mut self, cache: &Cache, id: ObjectId) {
        self.freed += cache.meta(id).map_or(0, |m| m.size);
        self.count += 1;
    }

    fn prefix_len(&mut self, cache: &Cache, ranked: &[(ObjectId, f64)]) -> usize {
        let mut n = 0;
        while n < ranked.len() && !self.done() {
            self.add(cache, ranked[n].0);
            n += 1;
        }
        n
    }
}

impl Policy for RankPolicy {
    fn make_room(
        &mut self,
        cache: &mut Cache,
        _incoming: ObjectId,
        incoming_size: u64,
    ) -> Result<(), PolicyFault> {
        while cache.used() + incoming_size > cache.capacity() && !cache.is_empty() {
            let deficit = cache.used() + incoming_size - cache.capacity();
            let victims = self.select_victims(cache, VictimDemand::Bytes(deficit))?;
            if victims.is_empty() {
                return Err(PolicyFault::new("no victim available"));
            }
            for v in victims {
                cache.evict(v);
            }
        }
        Ok(())
    }

    fn on_insert(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        self.rescore(cache, id)
    }

    fn on_access(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        self.rescore(cache, id)
    }
}
