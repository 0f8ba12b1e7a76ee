//! Queue-topology caches: up to five FIFO or LRU queues plus a ghost FIFO,
//! with interpreted placement and tail-transition programs.
//!
//! Capacities are in object slots. A miss evaluates the placement program;
//! if the chosen queue is full its tail is displaced first. Each displaced
//! tail runs its queue's transition program, which sends it to the head of a
//! resident queue (possibly its own), to the ghost (`-1`) or to deletion
//! (`-2`). Moves into resident queues draw on a per-request budget of
//! `max_transitions_allowed`; once it is spent, further displaced tails go
//! to the ghost.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{ContextKind, DslError, Feature, FeatureSource, ScoreProgram, MAX_QUEUES};
use crate::engine::{Cache, Policy, PolicyFault};
use crate::list::{Handle, IndexList};
use crate::trace::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueueType {
    #[serde(rename = "FIFO", alias = "fifo")]
    Fifo,
    #[serde(rename = "LRU", alias = "lru")]
    Lru,
}

/// On-disk form of a topology; programs are DSL source text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Redundant with the list lengths; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_queues: Option<usize>,
    pub queue_types: Vec<QueueType>,
    pub queue_fractions: Vec<f64>,
    pub ghost_fraction: f64,
    pub max_transitions_allowed: u32,
    pub init_program: String,
    pub transition_programs: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Shape(String),
    #[error("{which}: {error}")]
    Program { which: String, error: DslError },
    #[error("reading topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing topology JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A validated topology with compiled programs. Immutable and shareable.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    spec: TopologySpec,
    init: ScoreProgram,
    transitions: Vec<ScoreProgram>,
}

impl Topology {
    pub fn new(spec: TopologySpec) -> Result<Topology, TopologyError> {
        let m = spec.queue_types.len();
        if m == 0 || m > MAX_QUEUES {
            return Err(TopologyError::Shape(format!(
                "needs 1 to {MAX_QUEUES} queues, got {m}"
            )));
        }
        if spec.num_queues.is_some_and(|n| n != m) {
            return Err(TopologyError::Shape(format!(
                "num_queues is {} but {m} queue types are listed",
                spec.num_queues.unwrap_or(0)
            )));
        }
        if spec.queue_fractions.len() != m || spec.transition_programs.len() != m {
            return Err(TopologyError::Shape(format!(
                "{m} queue types, {} fractions and {} transition programs must agree",
                spec.queue_fractions.len(),
                spec.transition_programs.len()
            )));
        }
        if spec
            .queue_fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(TopologyError::Shape(
                "queue fractions must lie in (0, 1]".into(),
            ));
        }
        let total: f64 = spec.queue_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(TopologyError::Shape(format!(
                "queue fractions sum to {total}, not 1"
            )));
        }
        if !(0.0..=1.0).contains(&spec.ghost_fraction) {
            return Err(TopologyError::Shape(
                "ghost fraction must lie in [0, 1]".into(),
            ));
        }
        let compile = |src: &str, kind, which: String| {
            ScoreProgram::parse(src, kind).map_err(|error| TopologyError::Program { which, error })
        };
        let init = compile(
            &spec.init_program,
            ContextKind::QtInit,
            "init program".into(),
        )?;
        let transitions = spec
            .transition_programs
            .iter()
            .enumerate()
            .map(|(i, src)| {
                compile(
                    src,
                    ContextKind::QtTransition,
                    format!("transition program {i}"),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Topology {
            spec,
            init,
            transitions,
        })
    }

    pub fn from_json(text: &str) -> Result<Topology, TopologyError> {
        Topology::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Topology, TopologyError> {
        Topology::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn num_queues(&self) -> usize {
        self.spec.queue_types.len()
    }

    pub fn init_program(&self) -> &ScoreProgram {
        &self.init
    }

    pub fn transition_program(&self, q: usize) -> &ScoreProgram {
        &self.transitions[q]
    }

    /// Slot capacity of each queue for a cache of `slots` total:
    /// `max(1, floor(fraction * slots))`, trimmed from the largest queue if
    /// rounding up to one slot overshoots.
    pub fn queue_capacities(&self, slots: u64) -> Result<Vec<usize>, TopologyError> {
        let m = self.num_queues();
        if slots < m as u64 {
            return Err(TopologyError::Shape(format!(
                "{slots} slots cannot hold {m} non-empty queues"
            )));
        }
        let mut caps: Vec<usize> = self
            .spec
            .queue_fractions
            .iter()
            .map(|f| ((f * slots as f64).floor() as usize).max(1))
            .collect();
        while caps.iter().sum::<usize>() as u64 > slots {
            let (i, _) = caps
                .iter()
                .enumerate()
                .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
                .expect("m >= 1");
            caps[i] -= 1;
        }
        Ok(caps)
    }

    pub fn ghost_capacity(&self, slots: u64) -> usize {
        (self.spec.ghost_fraction * slots as f64).floor() as usize
    }

    /// Evaluates the placement program: rounded, then clamped to a queue.
    pub fn initial_placement(&self, in_ghost: bool, obj_size: u64, is_full: &[bool]) -> usize {
        let v = self.init.evaluate(&InitContext {
            in_ghost,
            obj_size,
            is_full,
        });
        let m = self.num_queues() as f64;
        v.round().clamp(0.0, m - 1.0) as usize
    }

    /// Evaluates queue `q`'s transition program for a displaced tail.
    pub fn transition(&self, q: usize, info: &QtObjInfo, vtime: u64) -> Destination {
        let v = self.transitions[q]
            .evaluate(&TransitionContext { info, vtime })
            .round();
        if v >= 0.0 && v < self.num_queues() as f64 {
            Destination::Queue(v as usize)
        } else if v == -2.0 {
            Destination::Trash
        } else {
            Destination::Ghost
        }
    }
}

/// Where a displaced tail goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Destination {
    Queue(usize),
    Ghost,
    Trash,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Queue(q) => write!(f, "{q}"),
            Destination::Ghost => f.write_str("-1"),
            Destination::Trash => f.write_str("-2"),
        }
    }
}

/// Routing features of one object. Counters survive moves between queues
/// and residence in the ghost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QtObjInfo {
    /// Hits since the object entered the cache.
    pub cache_access_count: u64,
    /// Hits since the object entered its current queue.
    pub queue_access_count: u64,
    pub cache_insertion_vtime: u64,
    pub queue_insertion_vtime: u64,
    pub last_access_vtime: u64,
    pub current_queue: usize,
}

struct InitContext<'a> {
    in_ghost: bool,
    obj_size: u64,
    is_full: &'a [bool],
}

impl FeatureSource for InitContext<'_> {
    fn feature(&self, f: Feature) -> f64 {
        match f {
            Feature::InGhost => f64::from(u8::from(self.in_ghost)),
            Feature::ObjSize => self.obj_size as f64,
            _ => 0.0,
        }
    }

    fn is_full(&self, queue: i64) -> bool {
        usize::try_from(queue)
            .ok()
            .and_then(|q| self.is_full.get(q))
            .copied()
            .unwrap_or(false)
    }
}

struct TransitionContext<'a> {
    info: &'a QtObjInfo,
    vtime: u64,
}

impl FeatureSource for TransitionContext<'_> {
    fn feature(&self, f: Feature) -> f64 {
        let i = self.info;
        match f {
            Feature::Vtime => self.vtime as f64,
            Feature::CacheAccessCount => i.cache_access_count as f64,
            Feature::QueueAccessCount => i.queue_access_count as f64,
            Feature::CacheInsertionVtime => i.cache_insertion_vtime as f64,
            Feature::QueueInsertionVtime => i.queue_insertion_vtime as f64,
            Feature::LastAccessVtime => i.last_access_vtime as f64,
            Feature::CurrentQueue => i.current_queue as f64,
            _ => 0.0,
        }
    }
}

struct Slot {
    info: QtObjInfo,
    handle: Handle,
}

/// Runtime state of a topology cache bound to one simulation.
pub struct TopologyPolicy {
    topology: std::sync::Arc<Topology>,
    queues: Vec<IndexList<ObjectId>>,
    caps: Vec<usize>,
    residents: HashMap<ObjectId, Slot>,
    ghost: VecDeque<(ObjectId, u64)>,
    ghost_info: HashMap<ObjectId, (QtObjInfo, u64)>,
    ghost_cap: usize,
    ghost_stamp: u64,
    pending: Option<(usize, Option<QtObjInfo>)>,
    transitions_evaluated: u64,
    max_cascade_evaluations: u64,
}

impl TopologyPolicy {
    pub fn new(topology: std::sync::Arc<Topology>, slots: u64) -> Result<Self, TopologyError> {
        let caps = topology.queue_capacities(slots)?;
        let m = caps.len();
        Ok(TopologyPolicy {
            ghost_cap: topology.ghost_capacity(slots),
            topology,
            queues: (0..m).map(|_| IndexList::new()).collect(),
            caps,
            residents: HashMap::new(),
            ghost: VecDeque::new(),
            ghost_info: HashMap::new(),
            ghost_stamp: 0,
            pending: None,
            transitions_evaluated: 0,
            max_cascade_evaluations: 0,
        })
    }

    pub fn queue_capacities(&self) -> &[usize] {
        &self.caps
    }

    /// Resident ids of queue `q`, head first.
    pub fn queue_contents(&self, q: usize) -> Vec<ObjectId> {
        self.queues[q].iter().copied().collect()
    }

    pub fn ghost_contents(&self) -> Vec<ObjectId> {
        self.ghost
            .iter()
            .filter(|(id, s)| self.ghost_info.get(id).is_some_and(|(_, cur)| cur == s))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn info(&self, id: ObjectId) -> Option<&QtObjInfo> {
        self.residents.get(&id).map(|s| &s.info)
    }

    pub fn ghost_len(&self) -> usize {
        self.ghost_info.len()
    }

    /// Total transition-program evaluations so far.
    pub fn transitions_evaluated(&self) -> u64 {
        self.transitions_evaluated
    }

    /// Largest number of transition evaluations spent on one request.
    pub fn max_cascade_evaluations(&self) -> u64 {
        self.max_cascade_evaluations
    }

    fn is_full(&self) -> Vec<bool> {
        self.queues
            .iter()
            .zip(&self.caps)
            .map(|(q, c)| q.len() >= *c)
            .collect()
    }

    fn push_head(&mut self, q: usize, id: ObjectId, mut info: QtObjInfo, vtime: u64) {
        info.current_queue = q;
        info.queue_access_count = 0;
        info.queue_insertion_vtime = vtime;
        let handle = self.queues[q].push_head(id);
        self.residents.insert(id, Slot { info, handle });
    }

    fn ghost_push(&mut self, id: ObjectId, info: QtObjInfo) {
        if self.ghost_cap == 0 {
            return;
        }
        self.ghost_stamp += 1;
        self.ghost_info.insert(id, (info, self.ghost_stamp));
        self.ghost.push_back((id, self.ghost_stamp));
        while self.ghost_info.len() > self.ghost_cap {
            let Some((old, stamp)) = self.ghost.pop_front() else {
                break;
            };
            if self.ghost_info.get(&old).is_some_and(|(_, s)| *s == stamp) {
                self.ghost_info.remove(&old);
            }
        }
    }

    /// Displaces tails until queue `target` can take one more object.
    fn cascade(&mut self, cache: &mut Cache, target: usize) -> Result<(), PolicyFault> {
        let vtime = cache.vtime();
        let mut budget = self.topology.spec.max_transitions_allowed;
        let mut reserve = vec![0usize; self.queues.len()];
        reserve[target] = 1;
        let mut work = VecDeque::from([target]);
        let mut evaluations = 0u64;
        while let Some(q) = work.pop_front() {
            while self.queues[q].len() + reserve[q] > self.caps[q] {
                let id = self.queues[q]
                    .pop_tail()
                    .expect("over-full queue has a tail");
                let slot = self
                    .residents
                    .remove(&id)
                    .expect("queued objects are resident");
                let dest = if budget > 0 {
                    cache.charge_evals(1)?;
                    evaluations += 1;
                    self.topology.transition(q, &slot.info, vtime)
                } else {
                    Destination::Ghost
                };
                match dest {
                    Destination::Queue(d) => {
                        budget -= 1;
                        self.push_head(d, id, slot.info, vtime);
                        if d != q && self.queues[d].len() + reserve[d] > self.caps[d] {
                            work.push_back(d);
                        }
                    }
                    Destination::Ghost => {
                        cache.evict(id);
                        self.ghost_push(id, slot.info);
                    }
                    Destination::Trash => {
                        cache.evict(id);
                    }
                }
            }
        }
        self.transitions_evaluated += evaluations;
        self.max_cascade_evaluations = self.max_cascade_evaluations.max(evaluations);
        Ok(())
    }
}

impl Policy for TopologyPolicy {
    fn make_room(
        &mut self,
        cache: &mut Cache,
        incoming: ObjectId,
        _incoming_size: u64,
    ) -> Result<(), PolicyFault> {
        if self.residents.contains_key(&incoming) {
            return Ok(());
        }
        let revived = self.ghost_info.remove(&incoming).map(|(info, _)| info);
        let is_full = self.is_full();
        cache.charge_evals(1)?;
        let q = self
            .topology
            .initial_placement(revived.is_some(), cache.request_size(), &is_full);
        if is_full[q] {
            self.cascade(cache, q)?;
        }
        self.pending = Some((q, revived));
        Ok(())
    }

    fn on_insert(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        let (q, revived) = self
            .pending
            .take()
            .ok_or_else(|| PolicyFault::new("insert without placement"))?;
        let vtime = cache.vtime();
        let info = match revived {
            Some(mut info) => {
                info.cache_access_count += 1;
                info.last_access_vtime = vtime;
                info
            }
            None => QtObjInfo {
                cache_access_count: 0,
                queue_access_count: 0,
                cache_insertion_vtime: vtime,
                queue_insertion_vtime: vtime,
                last_access_vtime: vtime,
                current_queue: q,
            },
        };
        self.push_head(q, id, info, vtime);
        Ok(())
    }

    fn on_access(&mut self, cache: &Cache, id: ObjectId) -> Result<(), PolicyFault> {
        let slot = self
            .residents
            .get_mut(&id)
            .ok_or_else(|| PolicyFault::new(format!("hit on untracked {id}")))?;
        slot.info.cache_access_count += 1;
        slot.info.queue_access_count += 1;
        slot.info.last_access_vtime = cache.vtime();
        let q = slot.info.current_queue;
        if self.topology.spec.queue_types[q] == QueueType::Lru {
            self.queues[q].remove(slot.handle);
            slot.handle = self.queues[q].push_head(id);
        }
        Ok(())
    }
}
