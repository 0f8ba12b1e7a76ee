//! Trace-replay cache simulator.
//!
//! The [`Cache`] owns residency, per-object metadata, the exact percentile
//! multisets and the eviction history. A [`Policy`] decides what to evict and
//! performs evictions through [`Cache::evict`], which keeps every structure
//! consistent. [`Simulator`] drives one policy over a request stream.

pub mod capacity;
pub mod history;
pub mod stats;

use std::cell::Cell;
use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsl::Stat;
use crate::policy::PolicySpec;
use crate::trace::{ObjectId, Request};

pub use capacity::CapacitySpec;
pub use history::{EvictionRecord, History};
pub use stats::{AggregateStats, OrderStatMultiset};

pub const DEFAULT_HISTORY_CAPACITY: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    /// Capacity is in bytes and objects occupy their request size.
    SizeAware,
    /// Capacity is in object slots and every object occupies one.
    SizeAgnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: u64,
    pub mode: SizeMode,
    #[serde(default = "default_history_capacity")]
    pub history_capacity: usize,
    /// Seeds randomized mechanisms such as sampled eviction.
    #[serde(default)]
    pub seed: u64,
    /// Optional cap on scoring-function evaluations for the whole run.
    #[serde(default)]
    pub eval_budget: Option<u64>,
}

fn default_history_capacity() -> usize {
    DEFAULT_HISTORY_CAPACITY
}

impl CacheConfig {
    pub fn new(capacity: u64, mode: SizeMode) -> Self {
        CacheConfig {
            capacity,
            mode,
            history_capacity: DEFAULT_HISTORY_CAPACITY,
            seed: 0,
            eval_budget: None,
        }
    }

    pub fn slots(capacity: u64) -> Self {
        Self::new(capacity, SizeMode::SizeAgnostic)
    }

    pub fn bytes(capacity: u64) -> Self {
        Self::new(capacity, SizeMode::SizeAware)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_history_capacity(mut self, n: usize) -> Self {
        self.history_capacity = n;
        self
    }

    pub fn with_eval_budget(mut self, budget: u64) -> Self {
        self.eval_budget = Some(budget);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.capacity == 0 {
            return Err(SimError::Config("capacity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-resident-object features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMeta {
    /// Accesses since insertion, counting the inserting miss.
    pub count: u64,
    pub last_access_vtime: u64,
    pub addition_vtime: u64,
    /// Effective size (always 1 in size-agnostic mode).
    pub size: u64,
    /// Cache-insertion sequence number; breaks score ties, older first.
    pub seq: u64,
}

/// A policy could not produce a decision. The run is treated as a failed
/// candidate.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct PolicyFault {
    pub message: String,
}

impl PolicyFault {
    pub fn new(message: impl Into<String>) -> Self {
        PolicyFault {
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy fault at vtime {vtime}: {fault}")]
    Fault { vtime: u64, fault: PolicyFault },
}

#[derive(Clone, Copy, Debug)]
struct Resident {
    meta: ObjectMeta,
    slot: usize,
}

/// Residency state shared between the simulator and its policy.
#[derive(Debug)]
pub struct Cache {
    config: CacheConfig,
    vtime: u64,
    residents: HashMap<ObjectId, Resident>,
    order: Vec<ObjectId>,
    used: u64,
    stats: AggregateStats,
    history: History,
    next_seq: u64,
    evals: Cell<u64>,
    evictions: u64,
    eviction_log: Option<Vec<ObjectId>>,
    request_size: u64,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Result<Cache, SimError> {
        config.validate()?;
        Ok(Cache {
            history: History::new(config.history_capacity),
            config,
            vtime: 0,
            residents: HashMap::new(),
            order: Vec::new(),
            used: 0,
            stats: AggregateStats::default(),
            next_seq: 0,
            evals: Cell::new(0),
            evictions: 0,
            eviction_log: None,
            request_size: 0,
        })
    }

    /// Size in bytes of the current request as it appears in the trace,
    /// before any size-agnostic normalization.
    pub fn request_size(&self) -> u64 {
        self.request_size
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn capacity(&self) -> u64 {
        self.config.capacity
    }

    /// Virtual time of the request being processed.
    pub fn vtime(&self) -> u64 {
        self.vtime
    }

    /// Occupied bytes (or slots).
    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.residents.contains_key(&id)
    }

    pub fn meta(&self, id: ObjectId) -> Option<&ObjectMeta> {
        self.residents.get(&id).map(|r| &r.meta)
    }

    /// Resident ids in an arbitrary but deterministic order, suitable for
    /// uniform sampling by index.
    pub fn residents(&self) -> &[ObjectId] {
        &self.order
    }

    pub fn stats(&self) -> &AggregateStats {
        &self.stats
    }

    /// Nearest-rank percentile over residents; `0` when empty.
    pub fn percentile(&self, stat: Stat, p: f64) -> f64 {
        self.stats.percentile(stat, p, self.vtime)
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn history_lookup(&self, id: ObjectId) -> Option<&EvictionRecord> {
        self.history.get(id)
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    /// Counts `n` scoring evaluations against the configured budget.
    pub fn charge_evals(&self, n: u64) -> Result<(), PolicyFault> {
        let total = self.evals.get() + n;
        self.evals.set(total);
        match self.config.eval_budget {
            Some(b) if total > b => Err(PolicyFault::new(format!(
                "evaluation budget of {b} exhausted"
            ))),
            _ => Ok(()),
        }
    }

    pub fn evals(&self) -> u64 {
        self.evals.get()
    }

    fn effective_size(&self, size: u64) -> u64 {
        match self.config.mode {
            SizeMode::SizeAware => size.max(1),
            SizeMode::SizeAgnostic => 1,
        }
    }

    /// Removes a resident object, recording it in the eviction history.
    /// Returns its final metadata, or `None` if it was not resident.
    pub fn evict(&mut self, id: ObjectId) -> Option<ObjectMeta> {
        let r = self.residents.remove(&id)?;
        let last = self.order.pop().expect("order tracks residents");
        if r.slot < self.order.len() {
            self.order[r.slot] = last;
            self.residents.get_mut(&last).expect("moved resident").slot = r.slot;
        }
        self.used -= r.meta.size;
        self.stats.counts.remove(r.meta.count);
        self.stats.addition_vtimes.remove(r.meta.addition_vtime);
        self.stats.sizes.remove(r.meta.size);
        self.history.push(EvictionRecord {
            object_id: id,
            eviction_vtime: self.vtime,
            count_at_eviction: r.meta.count,
            age_at_eviction: self.vtime - r.meta.addition_vtime,
        });
        self.evictions += 1;
        if let Some(log) = &mut self.eviction_log {
            log.push(id);
        }
        Some(r.meta)
    }

    fn insert(&mut self, id: ObjectId, size: u64) {
        let meta = ObjectMeta {
            count: 1,
            last_access_vtime: self.vtime,
            addition_vtime: self.vtime,
            size,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.residents.insert(
            id,
            Resident {
                meta,
                slot: self.order.len(),
            },
        );
        self.order.push(id);
        self.used += size;
        self.stats.counts.insert(1);
        self.stats.addition_vtimes.insert(self.vtime);
        self.stats.sizes.insert(size);
    }

    fn touch(&mut self, id: ObjectId, size: u64) {
        let vtime = self.vtime;
        let r = self.residents.get_mut(&id).expect("touch on resident");
        let old = r.meta;
        r.meta.count += 1;
        r.meta.last_access_vtime = vtime;
        r.meta.size = size;
        self.used = self.used - old.size + size;
        self.stats.counts.remove(old.count);
        self.stats.counts.insert(old.count + 1);
        if size != old.size {
            self.stats.sizes.remove(old.size);
            self.stats.sizes.insert(size);
        }
    }

    /// Compares the multisets with a from-scratch recomputation.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut counts: Vec<u64> = self.residents.values().map(|r| r.meta.count).collect();
        let mut adds: Vec<u64> = self
            .residents
            .values()
            .map(|r| r.meta.addition_vtime)
            .collect();
        let mut sizes: Vec<u64> = self.residents.values().map(|r| r.meta.size).collect();
        counts.sort_unstable();
        adds.sort_unstable();
        sizes.sort_unstable();
        if counts != self.stats.counts.to_sorted_vec() {
            return Err("count multiset drifted".into());
        }
        if adds != self.stats.addition_vtimes.to_sorted_vec() {
            return Err("addition-vtime multiset drifted".into());
        }
        if sizes != self.stats.sizes.to_sorted_vec() {
            return Err("size multiset drifted".into());
        }
        let used: u64 = sizes.iter().sum();
        if used != self.used {
            return Err(format!("used {} but residents total {used}", self.used));
        }
        for (i, id) in self.order.iter().enumerate() {
            if self.residents.get(id).map(|r| r.slot) != Some(i) {
                return Err(format!("slot index broken for {id}"));
            }
        }
        Ok(())
    }
}

/// An eviction policy bound to one simulation.
pub trait Policy {
    /// Evicts until `cache.used() + incoming_size <= cache.capacity()`.
    /// `incoming` is the object about to be inserted, or the resident object
    /// whose size just grew (then `incoming_size` is 0).
    fn make_room(
        &mut self,
        cache: &mut Cache,
        incoming: ObjectId,
        incoming_size: u64,
    ) -> Result<(), PolicyFault>;

    /// `id` was just inserted; its eviction record, if any, is still visible.
    fn on_insert(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault>;

    /// `id` was hit; its metadata already reflects this access.
    fn on_access(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn make_room(
        &mut self,
        cache: &mut Cache,
        incoming: ObjectId,
        incoming_size: u64,
    ) -> Result<(), PolicyFault> {
        (**self).make_room(cache, incoming, incoming_size)
    }

    fn on_insert(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        (**self).on_insert(cache, id)
    }

    fn on_access(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        (**self).on_access(cache, id)
    }
}

/// Aggregate outcome of one replay.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub object_hit_rate: f64,
    pub byte_hit_rate: f64,
    pub evictions: u64,
    pub bytes_requested: u64,
    pub bytes_hit: u64,
    /// Wall-clock seconds, present only when timing was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl SimResult {
    pub fn miss_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.misses as f64 / self.requests as f64
        }
    }
}

/// Relative miss-rate reduction of `policy` over `fifo`; `0` when FIFO never misses.
pub fn miss_rate_reduction(policy: &SimResult, fifo: &SimResult) -> f64 {
    let base = fifo.miss_rate();
    if base == 0.0 {
        0.0
    } else {
        (base - policy.miss_rate()) / base
    }
}

/// Drives a policy over requests one at a time.
pub struct Simulator<'p> {
    cache: Cache,
    policy: Box<dyn Policy + 'p>,
    requests: u64,
    hits: u64,
    bytes_requested: u64,
    bytes_hit: u64,
}

impl<'p> Simulator<'p> {
    pub fn new(policy: Box<dyn Policy + 'p>, config: CacheConfig) -> Result<Self, SimError> {
        Ok(Simulator {
            cache: Cache::new(config)?,
            policy,
            requests: 0,
            hits: 0,
            bytes_requested: 0,
            bytes_hit: 0,
        })
    }

    /// Builds the policy described by `spec` and a simulator around it.
    pub fn from_spec(
        spec: &PolicySpec,
        config: CacheConfig,
    ) -> Result<Simulator<'static>, SimError> {
        let policy = spec.instantiate(&config)?;
        Simulator::new(policy, config)
    }

    /// Keeps the ids of evicted objects in eviction order.
    pub fn record_evictions(&mut self) {
        self.cache.eviction_log.get_or_insert_with(Vec::new);
    }

    pub fn eviction_log(&self) -> &[ObjectId] {
        self.cache.eviction_log.as_deref().unwrap_or(&[])
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// Processes one request at virtual time equal to the number of requests
    /// already processed. Returns whether it hit.
    pub fn step(&mut self, object_id: ObjectId, size: u64) -> Result<bool, SimError> {
        let vtime = self.requests;
        self.cache.vtime = vtime;
        self.cache.request_size = size;
        self.requests += 1;
        self.bytes_requested += size;
        let fault = |fault| SimError::Fault { vtime, fault };
        let esize = self.cache.effective_size(size);
        if self.cache.contains(object_id) {
            self.hits += 1;
            self.bytes_hit += size;
            self.cache.touch(object_id, esize);
            self.policy
                .on_access(&self.cache, object_id)
                .map_err(fault)?;
            if self.cache.used > self.cache.capacity() {
                self.policy
                    .make_room(&mut self.cache, object_id, 0)
                    .map_err(fault)?;
            }
            return Ok(true);
        }
        if esize > self.cache.capacity() {
            return Ok(false);
        }
        self.policy
            .make_room(&mut self.cache, object_id, esize)
            .map_err(fault)?;
        if self.cache.used + esize > self.cache.capacity() {
            return Err(fault(PolicyFault::new("policy did not free enough space")));
        }
        self.cache.insert(object_id, esize);
        self.policy
            .on_insert(&self.cache, object_id)
            .map_err(fault)?;
        self.cache.history.remove(object_id);
        Ok(false)
    }

    pub fn step_request(&mut self, r: &Request) -> Result<bool, SimError> {
        self.step(r.object_id, r.size)
    }

    pub fn run(&mut self, trace: &[Request]) -> Result<(), SimError> {
        trace
            .iter()
            .try_for_each(|r| self.step_request(r).map(|_| ()))
    }

    pub fn result(&self) -> SimResult {
        let misses = self.requests - self.hits;
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        SimResult {
            requests: self.requests,
            hits: self.hits,
            misses,
            object_hit_rate: ratio(self.hits, self.requests),
            byte_hit_rate: ratio(self.bytes_hit, self.bytes_requested),
            evictions: self.cache.evictions,
            bytes_requested: self.bytes_requested,
            bytes_hit: self.bytes_hit,
            wall_time_secs: None,
        }
    }
}

/// Replays `trace` under `policy`. The result carries no wall time so it is
/// bit-reproducible; see [`run_simulation_timed`].
pub fn run_simulation(
    trace: &[Request],
    policy: &PolicySpec,
    config: &CacheConfig,
) -> Result<SimResult, SimError> {
    let mut sim = Simulator::from_spec(policy, config.clone())?;
    sim.run(trace)?;
    Ok(sim.result())
}

pub fn run_simulation_timed(
    trace: &[Request],
    policy: &PolicySpec,
    config: &CacheConfig,
) -> Result<SimResult, SimError> {
    let start = Instant::now();
    let mut r = run_simulation(trace, policy, config)?;
    r.wall_time_secs = Some(start.elapsed().as_secs_f64());
    Ok(r)
}

/// Per-request hit flags, for sequence-level comparisons.
pub fn hit_sequence(
    trace: &[Request],
    policy: &PolicySpec,
    config: &CacheConfig,
) -> Result<Vec<bool>, SimError> {
    let mut sim = Simulator::from_spec(policy, config.clone())?;
    trace.iter().map(|r| sim.step_request(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicySpec;
    use crate::trace::{generate_zipf_trace, parse_csv_str, summarize, SizeModel};

    fn lru() -> PolicySpec {
        PolicySpec::builtin("lru").unwrap()
    }

    #[test]
    fn aba_with_two_slots_hits_once() {
        let t = parse_csv_str("a\nb\na").unwrap();
        let r = run_simulation(&t, &lru(), &CacheConfig::slots(2)).unwrap();
        assert_eq!((r.hits, r.misses), (1, 2));
        assert_eq!(r.object_hit_rate, 1.0 / 3.0);
    }

    #[test]
    fn capacity_at_footprint_only_cold_misses() {
        let t = generate_zipf_trace(
            300,
            5000,
            0.8,
            SizeModel::LogNormal {
                mu: 5.0,
                sigma: 1.0,
            },
            9,
        )
        .unwrap();
        let s = summarize(&t);
        for name in crate::policy::BUILTIN_NAMES {
            let r = run_simulation(
                &t,
                &PolicySpec::builtin(name).unwrap(),
                &CacheConfig::bytes(s.footprint_bytes),
            )
            .unwrap();
            assert_eq!(r.misses, s.unique_objects, "{name}");
            assert_eq!(r.evictions, 0, "{name}");
        }
    }

    #[test]
    fn eviction_record_fields() {
        // a is inserted at 4, reaches count 3, and is the LRU victim at 10.
        let mut sim = Simulator::from_spec(&lru(), CacheConfig::slots(2)).unwrap();
        let ids = ["x", "x", "x", "x", "a", "a", "a", "x", "x", "x", "b"];
        for id in ids {
            sim.step(ObjectId::from_token(id), 1).unwrap();
        }
        let rec = sim
            .cache()
            .history_lookup(ObjectId::from_token("a"))
            .copied()
            .unwrap();
        assert_eq!(
            (
                rec.eviction_vtime,
                rec.count_at_eviction,
                rec.age_at_eviction
            ),
            (10, 3, 6)
        );
        assert!(sim
            .cache()
            .history_lookup(ObjectId::from_token("never"))
            .is_none());
    }

    #[test]
    fn history_is_fifo_bounded() {
        let cfg = CacheConfig::slots(1).with_history_capacity(8);
        let mut sim = Simulator::from_spec(&lru(), cfg).unwrap();
        for i in 0..10 {
            sim.step(ObjectId(i), 1).unwrap();
        }
        // Ids 0..=8 were evicted; 9 records would exceed the bound of 8.
        assert!(sim.cache().history_lookup(ObjectId(0)).is_none());
        assert!((1..9).all(|i| sim.cache().history_lookup(ObjectId(i)).is_some()));
    }

    #[test]
    fn reinsertion_drops_the_record() {
        let mut sim = Simulator::from_spec(&lru(), CacheConfig::slots(1)).unwrap();
        for id in [1, 2, 1] {
            sim.step(ObjectId(id), 1).unwrap();
        }
        assert!(sim.cache().history_lookup(ObjectId(1)).is_none());
        assert!(sim.cache().history_lookup(ObjectId(2)).is_some());
    }

    #[test]
    fn oversized_objects_bypass() {
        let t = parse_csv_str("a,50\nbig,500\nbig,500\na,50").unwrap();
        let r = run_simulation(&t, &lru(), &CacheConfig::bytes(100)).unwrap();
        assert_eq!((r.hits, r.misses, r.evictions), (1, 3, 0));
    }

    #[test]
    fn growth_on_hit_triggers_eviction() {
        let t = parse_csv_str("a,40\nb,40\na,80\nb,40").unwrap();
        let mut sim = Simulator::from_spec(&lru(), CacheConfig::bytes(100)).unwrap();
        let hits: Vec<bool> = t.iter().map(|r| sim.step_request(r).unwrap()).collect();
        assert_eq!(hits, [false, false, true, false]);
        assert!(sim.cache().used() <= 100);
        sim.cache().check_consistency().unwrap();
    }

    #[test]
    fn size_agnostic_counts_slots() {
        let t = parse_csv_str("a,1000\nb,1000\na,1000").unwrap();
        let r = run_simulation(&t, &lru(), &CacheConfig::slots(2)).unwrap();
        assert_eq!(r.hits, 1);
        assert_eq!(r.byte_hit_rate, 1.0 / 3.0);
    }

    #[test]
    fn mrr_identities() {
        let fifo = SimResult {
            requests: 10,
            hits: 5,
            misses: 5,
            ..Default::default()
        };
        let pol = SimResult {
            requests: 10,
            hits: 6,
            misses: 4,
            ..Default::default()
        };
        assert_eq!(miss_rate_reduction(&fifo, &fifo), 0.0);
        assert!((miss_rate_reduction(&pol, &fifo) - 0.2).abs() < 1e-12);
        let perfect = SimResult {
            requests: 10,
            hits: 10,
            misses: 0,
            ..Default::default()
        };
        assert_eq!(miss_rate_reduction(&pol, &perfect), 0.0);
    }

    #[test]
    fn lru_loses_to_fifo_on_loops() {
        let t = crate::trace::generate_phase_trace(
            &[crate::trace::Phase {
                generator: crate::trace::GeneratorSpec::Loop {
                    loop_len: 120,
                    size_model: SizeModel::Constant { bytes: 1 },
                    id_offset: 0,
                },
                length: 6000,
            }],
            0,
        )
        .unwrap();
        let cfg = CacheConfig::slots(100);
        let fifo = run_simulation(&t, &PolicySpec::builtin("fifo").unwrap(), &cfg).unwrap();
        let lru = run_simulation(&t, &lru(), &cfg).unwrap();
        assert!(miss_rate_reduction(&lru, &fifo) <= 0.0);
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(matches!(
            Cache::new(CacheConfig::slots(0)),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn eval_budget_faults_the_run() {
        let t = generate_zipf_trace(50, 500, 1.0, SizeModel::Constant { bytes: 1 }, 1).unwrap();
        let cfg = CacheConfig::slots(10).with_eval_budget(100);
        let err = run_simulation(&t, &lru(), &cfg).unwrap_err();
        assert!(matches!(err, SimError::Fault { .. }));
    }
}
