//! Candidate evaluation: parse, validate, simulate and reduce to one objective.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsl::{ContextKind, DslError, ScoreProgram};
use crate::engine::{
    miss_rate_reduction, run_simulation, CacheConfig, CapacitySpec, SimResult, SizeMode,
};
use crate::policy::PolicySpec;
use crate::rank::Mechanism;
use crate::topology::{Topology, TopologySpec};
use crate::trace::{read_csv_trace, summarize, Request};
use crate::workloads;

/// Where an evaluation trace comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRef {
    /// A bundled workload, by name.
    Bundled(String),
    /// A CSV trace file.
    Path(PathBuf),
}

impl TraceRef {
    pub fn label(&self) -> String {
        match self {
            TraceRef::Bundled(n) => n.clone(),
            TraceRef::Path(p) => p.display().to_string(),
        }
    }

    pub fn load(&self) -> Result<Vec<Request>, String> {
        match self {
            TraceRef::Bundled(name) => workloads::by_name(name)
                .ok_or_else(|| format!("no bundled workload named {name:?}"))?
                .generate()
                .map_err(|e| e.to_string()),
            TraceRef::Path(p) => read_csv_trace(p).map_err(|e| format!("{}: {e}", p.display())),
        }
    }
}

/// What kind of policy candidates are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchTarget {
    /// Rank scoring programs under one selection mechanism.
    Rank {
        #[serde(with = "mechanism_str")]
        mechanism: Mechanism,
    },
    /// Routing programs plugged into a fixed queue skeleton (types, fractions,
    /// ghost size and budget come from `skeleton`; its programs seed the search).
    Topology { skeleton: TopologySpec },
}

mod mechanism_str {
    use super::Mechanism;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mechanism, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&m.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mechanism, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// The single number a search maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    ObjectHitRate,
    MrrVsFifo,
    /// `hit_rate_weight · hit rate + mrr_weight · MRR`.
    Weighted {
        hit_rate_weight: f64,
        mrr_weight: f64,
    },
}

impl Objective {
    fn needs_fifo(self) -> bool {
        !matches!(self, Objective::ObjectHitRate)
    }
}

/// Traces, cache size and objective shared by every candidate in a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub traces: Vec<TraceRef>,
    pub capacity: CapacitySpec,
    pub mode: SizeMode,
    pub target: SearchTarget,
    pub objective: Objective,
    /// Optional cap on scoring evaluations per simulation.
    #[serde(default)]
    pub eval_budget: Option<u64>,
}

/// Outcome class of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ParseFail,
    ValidateFail,
    RuntimeFail,
    Ok,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::ParseFail => "parse_fail",
            Status::ValidateFail => "validate_fail",
            Status::RuntimeFail => "runtime_fail",
            Status::Ok => "ok",
        })
    }
}

/// Result of evaluating one source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub status: Status,
    pub objective: Option<f64>,
    pub error: Option<String>,
    pub results: Vec<SimResult>,
}

impl Evaluation {
    fn failed(status: Status, error: impl Into<String>) -> Self {
        Evaluation {
            status,
            objective: None,
            error: Some(error.into()),
            results: Vec::new(),
        }
    }
}

fn dsl_failure(which: &str, e: DslError) -> Evaluation {
    match e {
        DslError::Syntax(s) => Evaluation::failed(Status::ParseFail, format!("{which}{s}")),
        DslError::Invalid(r) => {
            let codes: Vec<String> = r
                .codes()
                .iter()
                .filter_map(|c| {
                    serde_json::to_value(c)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                })
                .collect();
            Evaluation::failed(
                Status::ValidateFail,
                format!("{which}[{}] {r}", codes.join(",")),
            )
        }
    }
}

/// Splits a sectioned topology candidate into its init and transition
/// programs. Sections start with `init:` or `t<i>:` at the start of a line;
/// following lines continue the section. `#` lines are comments.
pub fn parse_topology_sections(
    text: &str,
    num_queues: usize,
) -> Result<(String, Vec<String>), String> {
    let mut init: Option<String> = None;
    let mut trans: Vec<Option<String>> = vec![None; num_queues];
    let mut current: Option<&mut String> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') {
            continue;
        }
        let header = trimmed.split_once(':').and_then(|(head, rest)| {
            let head = head.trim();
            if head == "init" {
                Some((None, rest))
            } else {
                head.strip_prefix('t')
                    .and_then(|n| n.parse::<usize>().ok())
                    .map(|i| (Some(i), rest))
            }
        });
        match header {
            Some((None, rest)) => {
                if init.is_some() {
                    return Err("duplicate init section".into());
                }
                current = Some(init.insert(rest.trim().to_string()));
            }
            Some((Some(i), rest)) => {
                let slot = trans.get_mut(i).ok_or_else(|| {
                    format!("section t{i} but the skeleton has {num_queues} queues")
                })?;
                if slot.is_some() {
                    return Err(format!("duplicate section t{i}"));
                }
                current = Some(slot.insert(rest.trim().to_string()));
            }
            None => match current.as_deref_mut() {
                Some(s) => {
                    s.push('\n');
                    s.push_str(line);
                }
                None if trimmed.is_empty() => {}
                None => return Err("text before the first section header".into()),
            },
        }
    }
    let init = init.ok_or("missing init section")?;
    let trans = trans
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| format!("missing section t{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((init, trans))
}

/// Formats routing programs in the sectioned candidate format.
pub fn format_topology_sections(init: &str, transitions: &[String]) -> String {
    let mut out = format!("init: {init}\n");
    for (i, t) in transitions.iter().enumerate() {
        out.push_str(&format!("t{i}: {t}\n"));
    }
    out
}

/// Programs of one candidate, parsed for its target.
#[derive(Clone, Debug)]
pub enum ParsedCandidate {
    Rank(ScoreProgram),
    Topology {
        init: ScoreProgram,
        transitions: Vec<ScoreProgram>,
    },
}

impl ParsedCandidate {
    /// Canonical source text in the target's candidate format.
    pub fn canonical(&self) -> String {
        match self {
            ParsedCandidate::Rank(p) => p.canonical(),
            ParsedCandidate::Topology { init, transitions } => {
                let t: Vec<String> = transitions.iter().map(|p| p.canonical()).collect();
                format_topology_sections(&init.canonical(), &t)
            }
        }
    }
}

/// Parses and validates candidate text for `target`.
pub fn parse_candidate(target: &SearchTarget, source: &str) -> Result<ParsedCandidate, Evaluation> {
    match target {
        SearchTarget::Rank { .. } => ScoreProgram::parse(source, ContextKind::RankScore)
            .map(ParsedCandidate::Rank)
            .map_err(|e| dsl_failure("", e)),
        SearchTarget::Topology { skeleton } => {
            let m = skeleton.queue_types.len();
            let (init, trans) = parse_topology_sections(source, m)
                .map_err(|e| Evaluation::failed(Status::ParseFail, e))?;
            let init = ScoreProgram::parse(&init, ContextKind::QtInit)
                .map_err(|e| dsl_failure("init: ", e))?;
            let transitions = trans
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    ScoreProgram::parse(t, ContextKind::QtTransition)
                        .map_err(|e| dsl_failure(&format!("t{i}: "), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ParsedCandidate::Topology { init, transitions })
        }
    }
}

/// Loaded traces and cached baselines; shared read-only by parallel workers.
pub struct Evaluator {
    spec: EvalSpec,
    traces: Vec<(String, Arc<Vec<Request>>, CacheConfig)>,
    fifo: Vec<Option<SimResult>>,
}

impl Evaluator {
    pub fn new(spec: EvalSpec) -> Result<Evaluator, String> {
        if spec.traces.is_empty() {
            return Err("evaluation needs at least one trace".into());
        }
        if matches!(spec.target, SearchTarget::Topology { .. })
            && spec.mode != SizeMode::SizeAgnostic
        {
            return Err("topology search runs in size-agnostic mode".into());
        }
        let mut traces = Vec::new();
        for r in &spec.traces {
            let t = r.load()?;
            let mut config =
                CacheConfig::new(spec.capacity.resolve(&summarize(&t), spec.mode), spec.mode);
            config.eval_budget = spec.eval_budget;
            traces.push((r.label(), Arc::new(t), config));
        }
        let fifo = if spec.objective.needs_fifo() {
            let p = PolicySpec::builtin("fifo").expect("builtin");
            traces
                .iter()
                .map(|(_, t, c)| run_simulation(t, &p, c).ok())
                .collect()
        } else {
            vec![None; traces.len()]
        };
        Ok(Evaluator { spec, traces, fifo })
    }

    pub fn spec(&self) -> &EvalSpec {
        &self.spec
    }

    pub fn trace_labels(&self) -> Vec<String> {
        self.traces.iter().map(|(n, ..)| n.clone()).collect()
    }

    /// Parses and validates `source` for this search's target.
    pub fn parse(&self, source: &str) -> Result<ParsedCandidate, Evaluation> {
        parse_candidate(&self.spec.target, source)
    }

    fn policy(&self, parsed: &ParsedCandidate) -> Result<PolicySpec, Evaluation> {
        match (parsed, &self.spec.target) {
            (ParsedCandidate::Rank(p), SearchTarget::Rank { mechanism }) => {
                PolicySpec::rank("candidate", p.clone(), *mechanism)
                    .map_err(|e| Evaluation::failed(Status::ValidateFail, e))
            }
            (
                ParsedCandidate::Topology { init, transitions },
                SearchTarget::Topology { skeleton },
            ) => {
                let spec = TopologySpec {
                    name: Some("candidate".into()),
                    init_program: init.source().to_string(),
                    transition_programs: transitions
                        .iter()
                        .map(|p| p.source().to_string())
                        .collect(),
                    ..skeleton.clone()
                };
                Topology::new(spec)
                    .map(PolicySpec::topology)
                    .map_err(|e| Evaluation::failed(Status::ValidateFail, e.to_string()))
            }
            _ => Err(Evaluation::failed(
                Status::ValidateFail,
                "candidate does not match the search target",
            )),
        }
    }

    /// Simulates a parsed candidate on every trace and reduces the results.
    pub fn evaluate_parsed(&self, parsed: &ParsedCandidate) -> Evaluation {
        let policy = match self.policy(parsed) {
            Ok(p) => p,
            Err(e) => return e,
        };
        let mut results = Vec::with_capacity(self.traces.len());
        for (label, trace, config) in &self.traces {
            match run_simulation(trace, &policy, config) {
                Ok(r) => results.push(r),
                Err(e) => return Evaluation::failed(Status::RuntimeFail, format!("{label}: {e}")),
            }
        }
        let n = results.len() as f64;
        let hit = results.iter().map(|r| r.object_hit_rate).sum::<f64>() / n;
        let mrr = || {
            results
                .iter()
                .zip(&self.fifo)
                .map(|(r, f)| f.as_ref().map_or(0.0, |f| miss_rate_reduction(r, f)))
                .sum::<f64>()
                / n
        };
        let objective = match self.spec.objective {
            Objective::ObjectHitRate => hit,
            Objective::MrrVsFifo => mrr(),
            Objective::Weighted {
                hit_rate_weight,
                mrr_weight,
            } => hit_rate_weight * hit + mrr_weight * mrr(),
        };
        if !objective.is_finite() {
            return Evaluation::failed(Status::RuntimeFail, "objective is not finite");
        }
        Evaluation {
            status: Status::Ok,
            objective: Some(objective),
            error: None,
            results,
        }
    }

    /// Parse, validate and simulate one source text.
    pub fn evaluate(&self, source: &str) -> Evaluation {
        match self.parse(source) {
            Ok(p) => self.evaluate_parsed(&p),
            Err(e) => e,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_spec(objective: Objective) -> EvalSpec {
        EvalSpec {
            traces: vec![TraceRef::Bundled("s2_zipf10".into())],
            capacity: CapacitySpec::Fraction(0.05),
            mode: SizeMode::SizeAgnostic,
            target: SearchTarget::Rank {
                mechanism: Mechanism::PriorityQueue,
            },
            objective,
            eval_budget: None,
        }
    }

    #[test]
    fn statuses() {
        let ev = Evaluator::new(rank_spec(Objective::ObjectHitRate)).unwrap();
        assert_eq!(ev.evaluate("vtime +").status, Status::ParseFail);
        let bad = ev.evaluate("is_full(0)");
        assert_eq!(bad.status, Status::ValidateFail);
        assert!(bad.error.unwrap().contains("wrong_context"));
        let ok = ev.evaluate("vtime");
        assert_eq!(ok.status, Status::Ok);
        assert_eq!(ok.objective, Some(ok.results[0].object_hit_rate));
    }

    #[test]
    fn budget_exhaustion_is_runtime_failure() {
        let mut spec = rank_spec(Objective::ObjectHitRate);
        spec.eval_budget = Some(10);
        let ev = Evaluator::new(spec).unwrap();
        assert_eq!(ev.evaluate("vtime").status, Status::RuntimeFail);
    }

    #[test]
    fn fifo_mrr_objective_is_zero() {
        let ev = Evaluator::new(rank_spec(Objective::MrrVsFifo)).unwrap();
        assert_eq!(ev.evaluate("obj.addition_vtime").objective, Some(0.0));
        assert!(ev.evaluate("vtime").objective.unwrap() > 0.0);
    }

    #[test]
    fn missing_trace_is_an_error() {
        let mut spec = rank_spec(Objective::ObjectHitRate);
        spec.traces = vec![TraceRef::Bundled("nope".into())];
        assert!(Evaluator::new(spec).is_err());
    }

    #[test]
    fn sections_round_trip() {
        let text = "# routing\ninit: if in_ghost then 1\n  else 0\nt1: -2\nt0: if obj.queue_access_count >= 1 then 1 else -1\n";
        let (init, trans) = parse_topology_sections(text, 2).unwrap();
        assert_eq!(init, "if in_ghost then 1\n  else 0");
        assert_eq!(trans[1], "-2");
        let again = parse_topology_sections(&format_topology_sections(&init, &trans), 2).unwrap();
        assert_eq!(again, (init, trans));
        assert!(parse_topology_sections("init: 0\n", 1)
            .unwrap_err()
            .contains("t0"));
        assert!(parse_topology_sections("init: 0\nt3: 1\n", 2).is_err());
        assert!(parse_topology_sections("vtime\n", 1).is_err());
    }

    #[test]
    fn topology_target_evaluates() {
        let skeleton: TopologySpec =
            serde_json::from_str(include_str!("../../fixtures/s3fifo_topology.json")).unwrap();
        let seed = format_topology_sections(&skeleton.init_program, &skeleton.transition_programs);
        let spec = EvalSpec {
            target: SearchTarget::Topology { skeleton },
            ..rank_spec(Objective::ObjectHitRate)
        };
        let ev = Evaluator::new(spec).unwrap();
        let e = ev.evaluate(&seed);
        assert_eq!(e.status, Status::Ok, "{:?}", e.error);
        assert_eq!(
            ev.evaluate("init: 0\nt0: is_full(0)\nt1: -1").status,
            Status::ValidateFail
        );
    }
}
