//! Policy references on the command line: `builtin:<name>[,mechanism=<m>]`,
//! `dsl:<path>[,mechanism=<m>]` and `topo:<path>`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Context;
use evocache::dsl::{ContextKind, ScoreProgram};
use evocache::policy::{PolicySpec, BUILTIN_NAMES};
use evocache::rank::{builtin_score_source, Mechanism};
use evocache::topology::Topology;

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyRef {
    Builtin {
        name: String,
        mechanism: Option<Mechanism>,
    },
    Dsl {
        path: PathBuf,
        mechanism: Option<Mechanism>,
    },
    Topology {
        path: PathBuf,
    },
}

/// Splits `target[,key=value...]`, accepting only the `mechanism` key.
fn split_options(rest: &str) -> Result<(&str, Option<Mechanism>), String> {
    let mut parts = rest.split(',');
    let target = parts.next().unwrap_or_default();
    if target.is_empty() {
        return Err("empty policy target".into());
    }
    let mut mechanism = None;
    for opt in parts {
        match opt.split_once('=') {
            Some(("mechanism", m)) => mechanism = Some(m.parse()?),
            _ => {
                return Err(format!(
                    "unknown policy option {opt:?} (expected mechanism=<pq|fullsort|samplesort:S>)"
                ))
            }
        }
    }
    Ok((target, mechanism))
}

impl FromStr for PolicyRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("policy {s:?} must start with builtin:, dsl: or topo:"))?;
        match kind {
            "builtin" => {
                let (name, mechanism) = split_options(rest)?;
                if !BUILTIN_NAMES.contains(&name) {
                    return Err(format!(
                        "unknown builtin policy {name:?}; known: {}",
                        BUILTIN_NAMES.join(", ")
                    ));
                }
                if mechanism.is_some() && builtin_score_source(name).is_none() {
                    return Err(format!(
                        "builtin {name:?} is a native policy and takes no mechanism"
                    ));
                }
                Ok(PolicyRef::Builtin {
                    name: name.to_string(),
                    mechanism,
                })
            }
            "dsl" => {
                let (path, mechanism) = split_options(rest)?;
                Ok(PolicyRef::Dsl {
                    path: path.into(),
                    mechanism,
                })
            }
            "topo" if !rest.is_empty() => Ok(PolicyRef::Topology { path: rest.into() }),
            _ => Err(format!(
                "policy {s:?} must be builtin:<name>, dsl:<path> or topo:<path>"
            )),
        }
    }
}

impl fmt::Display for PolicyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mech = |m: &Option<Mechanism>| m.map(|m| format!(",mechanism={m}")).unwrap_or_default();
        match self {
            PolicyRef::Builtin { name, mechanism } => {
                write!(f, "builtin:{name}{}", mech(mechanism))
            }
            PolicyRef::Dsl { path, mechanism } => {
                write!(f, "dsl:{}{}", path.display(), mech(mechanism))
            }
            PolicyRef::Topology { path } => write!(f, "topo:{}", path.display()),
        }
    }
}

impl PolicyRef {
    /// Loads files and builds the policy.
    pub fn resolve(&self) -> anyhow::Result<PolicySpec> {
        match self {
            PolicyRef::Builtin { name, mechanism } => {
                let spec = match mechanism {
                    Some(m) => PolicySpec::builtin_with(name, *m),
                    None => PolicySpec::builtin(name),
                };
                Ok(spec?)
            }
            PolicyRef::Dsl { path, mechanism } => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let program = ScoreProgram::parse(&text, ContextKind::RankScore)
                    .with_context(|| format!("in scoring program {}", path.display()))?;
                let name = path
                    .file_stem()
                    .map_or("dsl".into(), |s| s.to_string_lossy().into_owned());
                PolicySpec::rank(name, program, mechanism.unwrap_or(Mechanism::PriorityQueue))
                    .map_err(anyhow::Error::msg)
            }
            PolicyRef::Topology { path } => Ok(PolicySpec::topology(
                Topology::load(path).with_context(|| format!("loading {}", path.display()))?,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_displays() {
        for s in [
            "builtin:lru",
            "builtin:gdsf,mechanism=samplesort:8",
            "dsl:p.dsl,mechanism=fullsort",
            "topo:t.json",
        ] {
            assert_eq!(s.parse::<PolicyRef>().unwrap().to_string(), s);
        }
        assert_eq!(
            "builtin:lfu,mechanism=pq".parse::<PolicyRef>().unwrap(),
            PolicyRef::Builtin {
                name: "lfu".into(),
                mechanism: Some(Mechanism::PriorityQueue)
            }
        );
    }

    #[test]
    fn rejects_bad_refs() {
        for s in [
            "builtin:nope",
            "lru",
            "builtin:",
            "topo:",
            "builtin:s3fifo,mechanism=pq",
            "dsl:x,speed=3",
            "file:x",
        ] {
            assert!(s.parse::<PolicyRef>().is_err(), "{s}");
        }
    }

    #[test]
    fn resolves_builtin() {
        let p: PolicyRef = "builtin:sieve".parse().unwrap();
        assert_eq!(p.resolve().unwrap(), PolicySpec::builtin("sieve").unwrap());
    }
}
