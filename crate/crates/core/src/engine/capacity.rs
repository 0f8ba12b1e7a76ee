//! Cache capacity given as an absolute size or as a fraction of a trace's
//! footprint.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SizeMode;
use crate::trace::TraceSummary;

/// Named footprint fractions.
pub const PRESETS: [(&str, f64); 3] = [("tiny", 0.001), ("small", 0.01), ("large", 0.1)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacitySpec {
    /// Bytes in size-aware mode, slots in size-agnostic mode.
    Absolute(u64),
    /// Fraction in (0, 1] of the footprint: distinct bytes, or distinct
    /// objects in size-agnostic mode.
    Fraction(f64),
}

impl CapacitySpec {
    /// Concrete capacity for a trace, never below 1.
    pub fn resolve(self, summary: &TraceSummary, mode: SizeMode) -> u64 {
        match self {
            CapacitySpec::Absolute(c) => c.max(1),
            CapacitySpec::Fraction(f) => {
                let footprint = match mode {
                    SizeMode::SizeAware => summary.footprint_bytes,
                    SizeMode::SizeAgnostic => summary.unique_objects,
                };
                ((footprint as f64 * f).floor() as u64).max(1)
            }
        }
    }

    /// The preset name when this is exactly a preset fraction.
    pub fn preset_name(self) -> Option<&'static str> {
        match self {
            CapacitySpec::Fraction(f) => PRESETS.iter().find(|(_, p)| *p == f).map(|(n, _)| *n),
            CapacitySpec::Absolute(_) => None,
        }
    }
}

impl fmt::Display for CapacitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacitySpec::Absolute(c) => write!(f, "abs:{c}"),
            CapacitySpec::Fraction(x) => match self.preset_name() {
                Some(name) => f.write_str(name),
                None => write!(f, "frac:{x}"),
            },
        }
    }
}

impl FromStr for CapacitySpec {
    type Err = String;

    /// Accepts `abs:<n>`, `frac:<x>` with x in (0, 1], or a preset name.
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some((_, f)) = PRESETS.iter().find(|(n, _)| *n == s) {
            return Ok(CapacitySpec::Fraction(*f));
        }
        if let Some(v) = s.strip_prefix("abs:") {
            let c: u64 = v
                .parse()
                .map_err(|_| format!("bad absolute capacity {v:?}"))?;
            if c == 0 {
                return Err("capacity must be at least 1".into());
            }
            return Ok(CapacitySpec::Absolute(c));
        }
        if let Some(v) = s.strip_prefix("frac:") {
            let f: f64 = v
                .parse()
                .map_err(|_| format!("bad capacity fraction {v:?}"))?;
            if !(f > 0.0 && f <= 1.0) {
                return Err(format!("capacity fraction must be in (0, 1], got {f}"));
            }
            return Ok(CapacitySpec::Fraction(f));
        }
        Err(format!(
            "capacity {s:?} is not abs:<n>, frac:<x> or one of tiny, small, large"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!(
            "small".parse::<CapacitySpec>().unwrap(),
            CapacitySpec::Fraction(0.01)
        );
        assert_eq!(
            "abs:64".parse::<CapacitySpec>().unwrap(),
            CapacitySpec::Absolute(64)
        );
        assert_eq!(
            "frac:0.25".parse::<CapacitySpec>().unwrap().to_string(),
            "frac:0.25"
        );
        assert_eq!(CapacitySpec::Fraction(0.1).to_string(), "large");
        for bad in ["frac:0", "frac:1.5", "abs:0", "abs:x", "huge"] {
            assert!(bad.parse::<CapacitySpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn resolves_against_footprint() {
        let s = TraceSummary {
            total_requests: 10,
            unique_objects: 250,
            footprint_bytes: 10_000,
            one_hit_wonder_fraction: 0.0,
        };
        assert_eq!(
            CapacitySpec::Fraction(0.01).resolve(&s, SizeMode::SizeAware),
            100
        );
        assert_eq!(
            CapacitySpec::Fraction(0.01).resolve(&s, SizeMode::SizeAgnostic),
            2
        );
        assert_eq!(
            CapacitySpec::Fraction(0.001).resolve(&s, SizeMode::SizeAgnostic),
            1
        );
        assert_eq!(
            CapacitySpec::Absolute(7).resolve(&s, SizeMode::SizeAware),
            7
        );
    }
}
