//! Bundled synthetic workloads: a 12-trace suite, the Zipf+scan search
//! instance and three generator families for clustering tests.
//!
//! Workloads are stored as recipes and generated on demand, so "bundled"
//! means reproducible from a name and seed rather than shipped as files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{
    generate_phase_trace, interleave, GeneratorSpec, Phase, Request, SizeModel, TraceError,
};

/// How to build a trace from generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    Phases {
        phases: Vec<Phase>,
    },
    /// Slots of `other` are mixed into `base` with probability `mix`.
    Interleave {
        base: Box<Recipe>,
        other: Box<Recipe>,
        mix: f64,
    },
}

impl Recipe {
    pub fn generate(&self, seed: u64) -> Result<Vec<Request>, TraceError> {
        match self {
            Recipe::Phases { phases } => generate_phase_trace(phases, seed),
            Recipe::Interleave { base, other, mix } => {
                let a = base.generate(seed)?;
                let b = other.generate(seed ^ 0x5EED_0F0F)?;
                Ok(interleave(&a, &b, *mix, seed.wrapping_add(1)))
            }
        }
    }

    fn single(generator: GeneratorSpec, length: usize) -> Recipe {
        Recipe::Phases {
            phases: vec![Phase { generator, length }],
        }
    }
}

/// A named, seeded recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    /// Generator family label, when the workload belongs to one.
    pub family: Option<String>,
    pub recipe: Recipe,
    pub seed: u64,
}

impl Workload {
    pub fn generate(&self) -> Result<Vec<Request>, TraceError> {
        self.recipe.generate(self.seed)
    }
}

const SIZES: SizeModel = SizeModel::LogNormal {
    mu: 7.0,
    sigma: 1.0,
};

fn zipf(num_objects: u64, alpha: f64, id_offset: u64) -> GeneratorSpec {
    GeneratorSpec::Zipf {
        num_objects,
        alpha,
        size_model: SIZES,
        id_offset,
    }
}

fn scan(id_offset: u64) -> GeneratorSpec {
    GeneratorSpec::Scan {
        size_model: SIZES,
        id_offset,
    }
}

fn looping(loop_len: u64, id_offset: u64) -> GeneratorSpec {
    GeneratorSpec::Loop {
        loop_len,
        size_model: SIZES,
        id_offset,
    }
}

/// Id ranges that never collide with Zipf or loop ids.
const SCAN_BASE: u64 = 1 << 40;
const SCAN_STRIDE: u64 = 1 << 32;

fn phase(generator: GeneratorSpec, length: usize) -> Phase {
    Phase { generator, length }
}

fn workload(name: &str, recipe: Recipe, seed: u64) -> Workload {
    Workload {
        name: name.to_string(),
        family: None,
        recipe,
        seed,
    }
}

/// The 12-trace synthetic suite: Zipf skews, uniform, loops, scans, phase
/// shifts and mixtures. Each trace has 20,000 requests.
pub fn suite() -> Vec<Workload> {
    const N: usize = 20_000;
    let mix = |base: Recipe, other: Recipe, mix: f64| Recipe::Interleave {
        base: Box::new(base),
        other: Box::new(other),
        mix,
    };
    vec![
        workload("s1_zipf08", Recipe::single(zipf(2_000, 0.8, 0), N), 101),
        workload("s2_zipf10", Recipe::single(zipf(2_000, 1.0, 0), N), 102),
        workload("s3_zipf12", Recipe::single(zipf(5_000, 1.2, 0), N), 103),
        workload("s4_uniform", Recipe::single(zipf(1_000, 0.0, 0), N), 104),
        workload("s5_loop", Recipe::single(looping(1_500, 0), N), 105),
        workload(
            "s6_zipf_scan",
            mix(
                Recipe::single(zipf(2_000, 1.0, 0), 14_000),
                Recipe::single(scan(SCAN_BASE), 6_000),
                0.3,
            ),
            106,
        ),
        workload(
            "s7_phase_shift",
            Recipe::Phases {
                phases: vec![
                    phase(zipf(1_500, 1.0, 0), 7_000),
                    phase(zipf(1_500, 1.0, 100_000), 7_000),
                    phase(zipf(1_500, 1.0, 200_000), 6_000),
                ],
            },
            107,
        ),
        workload(
            "s8_loop_zipf",
            mix(
                Recipe::single(looping(800, 0), 12_000),
                Recipe::single(zipf(1_000, 0.9, 100_000), 8_000),
                0.4,
            ),
            108,
        ),
        workload(
            "s9_scan_then_churn",
            Recipe::Phases {
                phases: vec![
                    phase(scan(SCAN_BASE), 5_000),
                    phase(zipf(1_000, 1.0, 0), 15_000),
                ],
            },
            109,
        ),
        workload("s10_small_hot", Recipe::single(zipf(300, 1.1, 0), N), 110),
        workload("s11_wide", Recipe::single(zipf(20_000, 0.7, 0), N), 111),
        workload(
            "s12_bursty_scans",
            Recipe::Phases {
                phases: vec![
                    phase(zipf(2_000, 0.9, 0), 6_000),
                    phase(scan(SCAN_BASE), 2_000),
                    phase(zipf(2_000, 0.9, 0), 6_000),
                    phase(scan(SCAN_BASE + SCAN_STRIDE), 2_000),
                    phase(zipf(2_000, 0.9, 0), 4_000),
                ],
            },
            112,
        ),
    ]
}

/// Looks up a suite workload, the search instance, or a family member by name.
pub fn by_name(name: &str) -> Option<Workload> {
    if name == ZIPF_SCAN_NAME {
        return Some(zipf_scan_instance());
    }
    suite()
        .into_iter()
        .chain(family_workloads(FAMILY_SIZE))
        .find(|w| w.name == name)
}

pub const ZIPF_SCAN_NAME: &str = "zipf_scan";

/// Zipf(α = 1) popularity over 5,000 objects with one-time scan requests
/// mixed into 30% of slots. In-cache frequency separates the popular head
/// from scan traffic, which recency cannot do, so frequency-aware scores beat
/// LRU here at small capacities.
pub fn zipf_scan_instance() -> Workload {
    let base = Recipe::single(zipf(5_000, 1.0, 0), 21_000);
    let other = Recipe::single(scan(SCAN_BASE), 9_000);
    let recipe = Recipe::Interleave {
        base: Box::new(base),
        other: Box::new(other),
        mix: 0.3,
    };
    workload(ZIPF_SCAN_NAME, recipe, 2024)
}

/// Generator family labels for clustering tests.
pub const FAMILIES: [&str; 3] = ["zipf", "scan", "loop"];
/// Default number of traces per family.
pub const FAMILY_SIZE: usize = 10;

/// `per_family` traces from each of three families with jittered parameters.
/// Families differ in popularity shape and object-size scale.
pub fn family_workloads(per_family: usize) -> Vec<Workload> {
    let mut out = Vec::with_capacity(per_family * FAMILIES.len());
    for (f, family) in FAMILIES.iter().enumerate() {
        for i in 0..per_family {
            let seed = 10_000 + (f * 1_000 + i) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let recipe = family_recipe(family, &mut rng);
            out.push(Workload {
                name: format!("{family}_{i:02}"),
                family: Some(family.to_string()),
                recipe,
                seed,
            });
        }
    }
    out
}

fn family_recipe(family: &str, rng: &mut ChaCha8Rng) -> Recipe {
    const N: usize = 10_000;
    match family {
        "zipf" => {
            let n = rng.random_range(1_000..4_000);
            let alpha = rng.random_range(0.8..1.2);
            let size_model = SizeModel::LogNormal {
                mu: 6.0,
                sigma: 0.5,
            };
            Recipe::single(
                GeneratorSpec::Zipf {
                    num_objects: n,
                    alpha,
                    size_model,
                    id_offset: 0,
                },
                N,
            )
        }
        "scan" => {
            let mix = rng.random_range(0.6..0.8);
            let size_model = SizeModel::LogNormal {
                mu: 9.0,
                sigma: 0.5,
            };
            let base = GeneratorSpec::Zipf {
                num_objects: 2_000,
                alpha: 0.9,
                size_model,
                id_offset: 0,
            };
            let other = GeneratorSpec::Scan {
                size_model,
                id_offset: SCAN_BASE,
            };
            Recipe::Interleave {
                base: Box::new(Recipe::single(base, N)),
                other: Box::new(Recipe::single(other, N)),
                mix,
            }
        }
        "loop" => {
            let loop_len = rng.random_range(200..2_000);
            let size_model = SizeModel::LogNormal {
                mu: 4.0,
                sigma: 0.5,
            };
            let base = GeneratorSpec::Loop {
                loop_len,
                size_model,
                id_offset: 0,
            };
            let noise = GeneratorSpec::Zipf {
                num_objects: 500,
                alpha: 1.0,
                size_model,
                id_offset: 1 << 30,
            };
            Recipe::Interleave {
                base: Box::new(Recipe::single(base, N)),
                other: Box::new(Recipe::single(noise, N / 10)),
                mix: 0.1,
            }
        }
        other => unreachable!("unknown family {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::summarize;
    use std::collections::HashSet;

    #[test]
    fn suite_has_twelve_distinct_deterministic_traces() {
        let s = suite();
        assert_eq!(s.len(), 12);
        let names: HashSet<_> = s.iter().map(|w| w.name.clone()).collect();
        assert_eq!(names.len(), 12);
        for w in &s {
            let t = w.generate().unwrap();
            assert_eq!(t.len(), 20_000, "{}", w.name);
            assert_eq!(t, w.generate().unwrap());
            assert!(t.iter().enumerate().all(|(i, r)| r.vtime == i as u64));
        }
    }

    #[test]
    fn scan_ids_never_repeat() {
        let t = by_name("s9_scan_then_churn").unwrap().generate().unwrap();
        let scan: Vec<_> = t[..5_000].iter().map(|r| r.object_id).collect();
        assert_eq!(scan.iter().collect::<HashSet<_>>().len(), 5_000);
        assert_eq!(summarize(&t[..5_000]).one_hit_wonder_fraction, 1.0);
    }

    #[test]
    fn families_are_labelled_and_sized() {
        let fam = family_workloads(4);
        assert_eq!(fam.len(), 12);
        for w in &fam {
            let label = w.family.as_deref().unwrap();
            assert!(w.name.starts_with(label));
            assert!(w.generate().unwrap().len() >= 10_000);
        }
        assert_eq!(by_name("loop_03").unwrap().family.as_deref(), Some("loop"));
        assert_eq!(
            by_name(ZIPF_SCAN_NAME).unwrap().generate().unwrap().len(),
            30_000
        );
        assert!(by_name("nope").is_none());
    }
}
