//! Evolutionary policy search: a generator proposes candidate programs, every
//! candidate is simulated and scored, and the best ones become exemplars for
//! the next round.

pub mod db;
pub mod eval;
pub mod llm;
pub mod mutate;

use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::ContextKind;
use crate::engine::SimResult;
use crate::topology::TopologySpec;

pub use db::CandidateDb;
pub use eval::{
    format_topology_sections, parse_candidate, parse_topology_sections, EvalSpec, Evaluation,
    Evaluator, Objective, ParsedCandidate, SearchTarget, Status, TraceRef,
};
pub use llm::{
    HttpTransport, LlmGenerator, RecordingTransport, ReplayTransport, Transport, TransportError,
};

/// How a candidate came to exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineage {
    Seed,
    Mutation,
    Llm,
}

/// Simulation result on one evaluation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub trace: String,
    #[serde(flatten)]
    pub result: SimResult,
}

/// One evaluated candidate; a row of the candidate database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub round: u32,
    /// Position within its round.
    pub index: u32,
    pub lineage: Lineage,
    /// Ids of the exemplars the candidate was derived from.
    pub parents: Vec<u64>,
    pub source: String,
    pub status: Status,
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub results: Vec<TraceOutcome>,
}

impl Candidate {
    /// Ordering used for exemplar selection: higher objective first, then
    /// lower id.
    fn rank_key(&self) -> (std::cmp::Reverse<OrdF64>, u64) {
        (
            std::cmp::Reverse(OrdF64(self.objective.unwrap_or(f64::NEG_INFINITY))),
            self.id,
        )
    }
}

/// Total order over floats, for sort keys.
#[derive(Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Stop when the best objective improved by less than `epsilon` over the
/// last `window` rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: usize,
    pub epsilon: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            window: 5,
            epsilon: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub candidates_per_round: usize,
    /// Number of top candidates shown to the generator each round.
    pub exemplar_count: usize,
    pub max_rounds: u32,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    /// Seed for the mutation generator.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            candidates_per_round: 25,
            exemplar_count: 2,
            max_rounds: 15,
            plateau: Some(Plateau::default()),
            seed: 0,
        }
    }
}

/// Instructions handed to a generator: what to write, which inputs exist,
/// the function shape and the rules, plus the seed programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub task: String,
    pub features_doc: String,
    pub signature: String,
    pub constraints: String,
    pub seeds: Vec<String>,
}

fn features_doc(kinds: &[ContextKind]) -> String {
    let mut out = String::new();
    for kind in kinds {
        out.push_str(&format!("In {} programs:\n", kind.name()));
        for (name, _) in kind.features() {
            out.push_str(&format!("  {name}: {}\n", describe_feature(name)));
        }
        for line in special_doc(*kind) {
            out.push_str(&format!("  {line}\n"));
        }
    }
    out
}

fn describe_feature(name: &str) -> &'static str {
    match name {
        "vtime" => "request counter, incremented once per request",
        "obj.count" => "accesses since the object entered the cache, including the inserting miss",
        "obj.last_access_vtime" => "vtime of the most recent access",
        "obj.addition_vtime" => "vtime when the object entered the cache",
        "obj.size" => "object size in bytes (1 when the cache counts slots)",
        "L_aging" => "score of the most recently evicted object, 0 before the first eviction",
        "in_ghost" => {
            "1 when the object was recently evicted and is remembered in the ghost list, else 0"
        }
        "obj_size" => "size of the requested object",
        "obj.cache_access_count" => "hits since the object entered the cache",
        "obj.queue_access_count" => "hits since the object entered its current queue",
        "obj.cache_insertion_vtime" => "vtime when the object entered the cache",
        "obj.queue_insertion_vtime" => "vtime when the object entered its current queue",
        "obj.current_queue" => "index of the queue the object sits in",
        _ => "",
    }
}

fn special_doc(kind: ContextKind) -> &'static [&'static str] {
    match kind {
        ContextKind::RankScore => &[
            "percentile(s, p): nearest-rank percentile over residents, s is one of counts, ages, sizes and p is in [0, 1]",
            "ghost_contains(): 1 when this object was evicted recently, else 0",
            "ghost_count(): its access count when it was evicted (0 if not remembered)",
            "ghost_age(): requests since it was evicted (0 if not remembered)",
        ],
        ContextKind::QtInit => &["is_full(q): 1 when queue q has no free slot, else 0"],
        ContextKind::QtTransition => &[],
    }
}

const GRAMMAR: &str = "Expressions use numbers, the inputs above, + - * /, comparisons < <= > >= == !=, \
and/or/not, if C then A else B, let x = E in B, and the functions min, max, abs, floor, log, exp, pow, clamp. \
Comparisons and logic yield 1 or 0. Division by zero yields 0.";

impl Template {
    /// Template for rank scoring programs, seeded with `vtime`.
    pub fn rank_default() -> Template {
        Template {
            task: "Write an eviction priority function for a cache. When space is needed, the resident with the \
                   lowest score is evicted. Aim for the highest object hit rate."
                .into(),
            features_doc: features_doc(&[ContextKind::RankScore]),
            signature: "A single expression that evaluates to a number for one resident object.".into(),
            constraints: format!("{GRAMMAR} At most {} nodes and depth {}.", crate::dsl::MAX_NODES, crate::dsl::MAX_DEPTH),
            seeds: vec!["vtime".into()],
        }
    }

    /// Template for routing programs of a fixed queue skeleton, seeded with
    /// the skeleton's own programs.
    pub fn topology_default(skeleton: &TopologySpec) -> Template {
        let m = skeleton.queue_types.len();
        let queues: Vec<String> = skeleton
            .queue_types
            .iter()
            .zip(&skeleton.queue_fractions)
            .enumerate()
            .map(|(i, (t, f))| format!("queue {i}: {t:?} holding {:.0}% of the slots", f * 100.0))
            .collect();
        Template {
            task: format!(
                "Write the routing rules for a cache built from {m} queues ({}). New objects are placed by the init \
                 rule. When an object reaches the tail of queue N, rule tN decides where it goes next. Aim for the \
                 highest object hit rate.",
                queues.join("; ")
            ),
            features_doc: features_doc(&[ContextKind::QtInit, ContextKind::QtTransition]),
            signature: format!(
                "Sections `init:` and `t0:` to `t{}:`, each followed by one expression. init returns a queue index. \
                 A tN rule returns a queue index to move the object there, -1 to evict it into the ghost list, or -2 \
                 to evict it without remembering it.",
                m - 1
            ),
            constraints: format!("{GRAMMAR} Results are rounded to the nearest integer. An init result outside the queue range is clamped; any other transition result evicts into the ghost list."),
            seeds: vec![format_topology_sections(&skeleton.init_program, &skeleton.transition_programs)],
        }
    }

    pub fn for_target(target: &SearchTarget) -> Template {
        match target {
            SearchTarget::Rank { .. } => Template::rank_default(),
            SearchTarget::Topology { skeleton } => Template::topology_default(skeleton),
        }
    }
}

/// A candidate proposed by a generator, not yet evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub source: String,
    pub lineage: Lineage,
    pub parents: Vec<u64>,
    /// Set when the generator already knows the proposal is unusable (for
    /// example a reply without a code block); it is recorded as a parse failure.
    pub failure: Option<String>,
}

/// What a generator sees when asked for one round of proposals.
pub struct GenerationRequest<'a> {
    pub template: &'a Template,
    pub target: &'a SearchTarget,
    /// Best candidates so far, best first.
    pub exemplars: &'a [Candidate],
    pub round: u32,
    pub count: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("generator failed: {0}")]
pub struct GeneratorError(pub String);

pub trait Generator {
    fn name(&self) -> &str;
    fn propose(&mut self, req: &GenerationRequest<'_>) -> Result<Vec<Proposal>, GeneratorError>;
}

/// Proposes grammar-preserving mutations of the exemplars; fully
/// deterministic under its seed.
pub struct MutationGenerator {
    rng: ChaCha8Rng,
}

impl MutationGenerator {
    pub fn new(seed: u64) -> Self {
        MutationGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Generator for MutationGenerator {
    fn name(&self) -> &str {
        "mutation"
    }

    fn propose(&mut self, req: &GenerationRequest<'_>) -> Result<Vec<Proposal>, GeneratorError> {
        let parsed: Vec<(u64, ParsedCandidate)> = req
            .exemplars
            .iter()
            .filter_map(|c| {
                parse_candidate(req.target, &c.source)
                    .ok()
                    .map(|p| (c.id, p))
            })
            .collect();
        if parsed.is_empty() {
            return Err(GeneratorError("no parseable exemplar to mutate".into()));
        }
        let mut out = Vec::with_capacity(req.count);
        for _ in 0..req.count {
            let (pid, parent) = parsed.choose(&mut self.rng).expect("non-empty");
            let (did, donor) = parsed.choose(&mut self.rng).expect("non-empty");
            let child = match (parent, donor) {
                (ParsedCandidate::Rank(p), ParsedCandidate::Rank(d)) => {
                    ParsedCandidate::Rank(mutate::mutate_with(p, Some(d), &mut self.rng))
                }
                (
                    ParsedCandidate::Topology { init, transitions },
                    ParsedCandidate::Topology {
                        init: dinit,
                        transitions: dtrans,
                    },
                ) => {
                    let mut init = init.clone();
                    let mut transitions = transitions.clone();
                    let slot = rand::Rng::random_range(&mut self.rng, 0..=transitions.len());
                    if slot == 0 {
                        init = mutate::mutate_with(&init, Some(dinit), &mut self.rng);
                    } else {
                        let i = slot - 1;
                        transitions[i] =
                            mutate::mutate_with(&transitions[i], Some(&dtrans[i]), &mut self.rng);
                    }
                    ParsedCandidate::Topology { init, transitions }
                }
                _ => unreachable!("exemplars share one target"),
            };
            let mut parents = vec![*pid];
            if did != pid {
                parents.push(*did);
            }
            out.push(Proposal {
                source: child.canonical(),
                lineage: Lineage::Mutation,
                parents,
                failure: None,
            });
        }
        Ok(out)
    }
}

/// Why a search ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum StopReason {
    MaxRounds,
    Plateau,
    /// The generator failed; candidates evaluated so far are kept.
    GeneratorError(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::MaxRounds => f.write_str("reached the round limit"),
            StopReason::Plateau => f.write_str("best objective plateaued"),
            StopReason::GeneratorError(e) => write!(f, "generator error: {e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub candidates: Vec<Candidate>,
    /// Best objective after each completed round; index 0 is the seed round.
    pub best_history: Vec<Option<f64>>,
    pub stop: StopReason,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .filter(|c| c.status == Status::Ok)
            .min_by_key(|c| c.rank_key())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("writing candidate database: {0}")]
    Db(#[from] std::io::Error),
}

fn evaluate_round(
    evaluator: &Evaluator,
    proposals: Vec<Proposal>,
    round: u32,
    next_id: &mut u64,
) -> Vec<Candidate> {
    let labels = evaluator.trace_labels();
    let evaluations: Vec<Evaluation> = proposals
        .par_iter()
        .map(|p| match &p.failure {
            Some(e) => Evaluation {
                status: Status::ParseFail,
                objective: None,
                error: Some(e.clone()),
                results: vec![],
            },
            None => evaluator.evaluate(&p.source),
        })
        .collect();
    proposals
        .into_iter()
        .zip(evaluations)
        .enumerate()
        .map(|(index, (p, e))| {
            let id = *next_id;
            *next_id += 1;
            Candidate {
                id,
                round,
                index: index as u32,
                lineage: p.lineage,
                parents: p.parents,
                source: p.source,
                status: e.status,
                objective: e.objective,
                error: e.error,
                results: labels
                    .iter()
                    .zip(e.results)
                    .map(|(trace, result)| TraceOutcome {
                        trace: trace.clone(),
                        result,
                    })
                    .collect(),
            }
        })
        .collect()
}

fn top_k(candidates: &[Candidate], k: usize) -> Vec<Candidate> {
    let mut ok: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.status == Status::Ok)
        .collect();
    ok.sort_by_key(|c| c.rank_key());
    ok.into_iter().take(k).cloned().collect()
}

/// Runs the search loop. Seeds from `template` form round 0; each later round
/// asks `generator` for `candidates_per_round` proposals built from the
/// global top `exemplar_count` candidates. Every candidate is appended to
/// `db` as soon as its round is evaluated.
pub fn run_search(
    evaluator: &Evaluator,
    generator: &mut dyn Generator,
    template: &Template,
    config: &SearchConfig,
    mut db: Option<&mut CandidateDb>,
) -> Result<SearchOutcome, SearchError> {
    if config.candidates_per_round == 0 || config.exemplar_count == 0 {
        return Err(SearchError::Config(
            "candidates per round and exemplar count must be positive".into(),
        ));
    }
    if template.seeds.is_empty() {
        return Err(SearchError::Config(
            "the template has no seed programs".into(),
        ));
    }
    let mut next_id = 0;
    let mut all: Vec<Candidate> = Vec::new();
    let mut history = Vec::new();
    let mut record = |round: Vec<Candidate>,
                      all: &mut Vec<Candidate>,
                      history: &mut Vec<Option<f64>>|
     -> Result<(), SearchError> {
        if let Some(db) = db.as_deref_mut() {
            for c in &round {
                db.append(c)?;
            }
        }
        all.extend(round);
        let best = all
            .iter()
            .filter(|c| c.status == Status::Ok)
            .filter_map(|c| c.objective)
            .reduce(f64::max);
        history.push(best);
        Ok(())
    };

    let seeds = template
        .seeds
        .iter()
        .map(|s| Proposal {
            source: s.clone(),
            lineage: Lineage::Seed,
            parents: vec![],
            failure: None,
        })
        .collect();
    let round0 = evaluate_round(evaluator, seeds, 0, &mut next_id);
    record(round0, &mut all, &mut history)?;

    let target = &evaluator.spec().target;
    let mut stop = StopReason::MaxRounds;
    for round in 1..=config.max_rounds {
        let exemplars = top_k(&all, config.exemplar_count);
        let req = GenerationRequest {
            template,
            target,
            exemplars: &exemplars,
            round,
            count: config.candidates_per_round,
        };
        let proposals = match generator.propose(&req) {
            Ok(p) => p,
            Err(e) => {
                stop = StopReason::GeneratorError(e.0);
                break;
            }
        };
        let evaluated = evaluate_round(evaluator, proposals, round, &mut next_id);
        record(evaluated, &mut all, &mut history)?;
        if let Some(p) = config.plateau {
            let r = history.len() - 1;
            if p.window > 0 && r >= p.window {
                let now = history[r].unwrap_or(f64::NEG_INFINITY);
                let then = history[r - p.window].unwrap_or(f64::NEG_INFINITY);
                if now - then < p.epsilon {
                    stop = StopReason::Plateau;
                    break;
                }
            }
        }
    }
    Ok(SearchOutcome {
        candidates: all,
        best_history: history,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{CapacitySpec, SizeMode};
    use crate::rank::Mechanism;

    fn evaluator() -> Evaluator {
        Evaluator::new(EvalSpec {
            traces: vec![TraceRef::Bundled("s2_zipf10".into())],
            capacity: CapacitySpec::Fraction(0.05),
            mode: SizeMode::SizeAgnostic,
            target: SearchTarget::Rank {
                mechanism: Mechanism::PriorityQueue,
            },
            objective: Objective::ObjectHitRate,
            eval_budget: None,
        })
        .unwrap()
    }

    fn small_config(seed: u64) -> SearchConfig {
        SearchConfig {
            candidates_per_round: 6,
            exemplar_count: 2,
            max_rounds: 3,
            plateau: None,
            seed,
        }
    }

    #[test]
    fn mutation_search_is_reproducible_and_monotone() {
        let ev = evaluator();
        let t = Template::rank_default();
        let run = |seed| {
            let mut g = MutationGenerator::new(seed);
            run_search(&ev, &mut g, &t, &small_config(seed), None).unwrap()
        };
        let a = run(4);
        assert_eq!(a, run(4));
        assert_eq!(a.candidates.len(), 1 + 3 * 6);
        assert_eq!(a.best_history.len(), 4);
        assert!(a.best_history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.candidates[0].lineage, Lineage::Seed);
        assert_eq!(a.candidates[0].source, "vtime");
        assert!(a
            .candidates
            .iter()
            .enumerate()
            .all(|(i, c)| c.id == i as u64));
        assert_eq!(a.best().unwrap().objective, *a.best_history.last().unwrap());
    }

    #[test]
    fn exemplars_sorted_by_objective_then_id() {
        let mk = |id, objective: Option<f64>, status| Candidate {
            id,
            round: 0,
            index: 0,
            lineage: Lineage::Seed,
            parents: vec![],
            source: String::new(),
            status,
            objective,
            error: None,
            results: vec![],
        };
        let cs = vec![
            mk(0, Some(0.2), Status::Ok),
            mk(1, Some(0.5), Status::Ok),
            mk(2, Some(0.5), Status::Ok),
            mk(3, None, Status::ParseFail),
            mk(4, Some(0.9), Status::RuntimeFail),
        ];
        let ids: Vec<u64> = top_k(&cs, 3).iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    struct Failing(usize);

    impl Generator for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn propose(
            &mut self,
            req: &GenerationRequest<'_>,
        ) -> Result<Vec<Proposal>, GeneratorError> {
            if self.0 == 0 {
                return Err(GeneratorError("out of replies".into()));
            }
            self.0 -= 1;
            Ok((0..req.count)
                .map(|_| Proposal {
                    source: "obj.count".into(),
                    lineage: Lineage::Llm,
                    parents: vec![0],
                    failure: None,
                })
                .collect())
        }
    }

    #[test]
    fn generator_error_keeps_partial_results() {
        let ev = evaluator();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        let mut db = CandidateDb::create(&path).unwrap();
        let out = run_search(
            &ev,
            &mut Failing(1),
            &Template::rank_default(),
            &small_config(0),
            Some(&mut db),
        )
        .unwrap();
        assert_eq!(
            out.stop,
            StopReason::GeneratorError("out of replies".into())
        );
        assert_eq!(out.candidates.len(), 7);
        drop(db);
        assert_eq!(CandidateDb::load(&path).unwrap(), out.candidates);
    }

    #[test]
    fn plateau_stops_early() {
        let ev = evaluator();
        let mut cfg = small_config(0);
        cfg.max_rounds = 20;
        cfg.plateau = Some(Plateau {
            window: 2,
            epsilon: 1.0,
        });
        let out = run_search(
            &ev,
            &mut MutationGenerator::new(0),
            &Template::rank_default(),
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(out.stop, StopReason::Plateau);
        assert_eq!(out.best_history.len(), 3);
    }

    #[test]
    fn topology_mutation_search_runs() {
        let mut skeleton: TopologySpec =
            serde_json::from_str(include_str!("../../fixtures/s3fifo_topology.json")).unwrap();
        // Mutants may route tails in cycles; a small per-request budget keeps them cheap.
        skeleton.max_transitions_allowed = 4;
        let target = SearchTarget::Topology {
            skeleton: skeleton.clone(),
        };
        let ev = Evaluator::new(EvalSpec {
            traces: vec![TraceRef::Bundled("s2_zipf10".into())],
            capacity: CapacitySpec::Fraction(0.05),
            mode: SizeMode::SizeAgnostic,
            target,
            objective: Objective::MrrVsFifo,
            eval_budget: None,
        })
        .unwrap();
        let out = run_search(
            &ev,
            &mut MutationGenerator::new(1),
            &Template::topology_default(&skeleton),
            &small_config(1),
            None,
        )
        .unwrap();
        assert_eq!(out.candidates[0].status, Status::Ok);
        assert!(
            out.candidates
                .iter()
                .filter(|c| c.status == Status::Ok)
                .count()
                > 1
        );
    }

    #[test]
    fn templates_mention_every_feature() {
        let t = Template::rank_default();
        for (name, _) in ContextKind::RankScore.features() {
            assert!(t.features_doc.contains(name));
            assert!(!describe_feature(name).is_empty());
        }
        for kind in [ContextKind::QtInit, ContextKind::QtTransition] {
            for (name, _) in kind.features() {
                assert!(!describe_feature(name).is_empty(), "{name}");
            }
        }
    }
}
