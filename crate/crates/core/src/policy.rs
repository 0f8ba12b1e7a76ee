//! Shareable policy definitions and the builtin catalogue.

use std::fmt;
use std::sync::Arc;

use crate::dsl::{ContextKind, ScoreProgram};
use crate::engine::{CacheConfig, Policy, SimError, SizeMode};
use crate::rank::{builtin_score_source, Mechanism, NativeKind, RankPolicy, RankSpec};
use crate::topology::{Topology, TopologyPolicy};

/// Names accepted by [`PolicySpec::builtin`].
pub const BUILTIN_NAMES: [&str; 9] = [
    "fifo",
    "lru",
    "mru",
    "lfu",
    "gdsf",
    "fifo_reinsertion",
    "sieve",
    "s3fifo",
    "twoq",
];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy {name:?}; builtins are {}", BUILTIN_NAMES.join(", "))]
pub struct UnknownPolicy {
    pub name: String,
}

/// An immutable policy definition. Each simulation instantiates its own
/// runtime state from it, so one spec can drive many parallel runs.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Rank(RankSpec),
    Native(NativeKind),
    Topology(Arc<Topology>),
}

impl PolicySpec {
    /// A builtin under its default mechanism (priority queue for scored ones).
    pub fn builtin(name: &str) -> Result<PolicySpec, UnknownPolicy> {
        PolicySpec::builtin_with(name, Mechanism::PriorityQueue)
    }

    /// A builtin with an explicit mechanism; native policies ignore it.
    pub fn builtin_with(name: &str, mechanism: Mechanism) -> Result<PolicySpec, UnknownPolicy> {
        if let Some(src) = builtin_score_source(name) {
            let program = ScoreProgram::parse(src, ContextKind::RankScore)
                .expect("builtin programs are valid");
            return Ok(PolicySpec::Rank(
                RankSpec::new(name, program, mechanism).expect("rank program"),
            ));
        }
        name.parse::<NativeKind>()
            .map(PolicySpec::Native)
            .map_err(|_| UnknownPolicy {
                name: name.to_string(),
            })
    }

    pub fn rank(
        name: impl Into<String>,
        program: ScoreProgram,
        mechanism: Mechanism,
    ) -> Result<PolicySpec, String> {
        RankSpec::new(name, program, mechanism).map(PolicySpec::Rank)
    }

    pub fn topology(t: Topology) -> PolicySpec {
        PolicySpec::Topology(Arc::new(t))
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Rank(r) if r.mechanism == Mechanism::PriorityQueue => r.name.clone(),
            PolicySpec::Rank(r) => format!("{}[{}]", r.name, r.mechanism),
            PolicySpec::Native(k) => k.name().to_string(),
            PolicySpec::Topology(t) => t.spec().name.clone().unwrap_or_else(|| "topology".into()),
        }
    }

    /// Fresh runtime state for one simulation under `config`.
    pub fn instantiate(&self, config: &CacheConfig) -> Result<Box<dyn Policy>, SimError> {
        Ok(match self {
            PolicySpec::Rank(r) => Box::new(RankPolicy::new(r.clone(), config.seed)),
            PolicySpec::Native(k) => Box::new(k.build(config.capacity)),
            PolicySpec::Topology(t) => {
                if config.mode != SizeMode::SizeAgnostic {
                    return Err(SimError::Config(
                        "queue topologies run in size-agnostic mode only".into(),
                    ));
                }
                Box::new(
                    TopologyPolicy::new(t.clone(), config.capacity)
                        .map_err(|e| SimError::Config(e.to_string()))?,
                )
            }
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_resolves_and_unknown_fails() {
        for name in BUILTIN_NAMES {
            let p = PolicySpec::builtin(name).unwrap();
            assert_eq!(p.label(), name);
        }
        assert_eq!(PolicySpec::builtin("nope").unwrap_err().name, "nope");
    }

    #[test]
    fn scored_builtins_are_programs() {
        match PolicySpec::builtin("mru").unwrap() {
            PolicySpec::Rank(r) => assert_eq!(r.program.canonical(), "-vtime"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            PolicySpec::builtin("sieve").unwrap(),
            PolicySpec::Native(NativeKind::Sieve)
        ));
    }

    #[test]
    fn topology_requires_slot_mode() {
        let t = Topology::from_json(include_str!("../fixtures/s3fifo_topology.json")).unwrap();
        let p = PolicySpec::topology(t);
        assert!(p.instantiate(&CacheConfig::bytes(100)).is_err());
        assert!(p.instantiate(&CacheConfig::slots(100)).is_ok());
    }
}
