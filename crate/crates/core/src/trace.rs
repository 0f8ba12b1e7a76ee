//! Request traces: CSV ingest and export, synthetic workload generators and
//! footprint summaries.
//!
//! Virtual time is the request index. Every generator and the CSV reader
//! number requests from 0 with no gaps.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use serde::{Deserialize, Serialize};

/// Opaque 64-bit object identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl ObjectId {
    /// Maps a textual id to an `ObjectId`. Decimal integers keep their value;
    /// anything else is hashed with 64-bit FNV-1a.
    pub fn from_token(token: &str) -> ObjectId {
        if let Ok(v) = token.parse::<u64>() {
            return ObjectId(v);
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        ObjectId(h)
    }
}

/// One trace event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub vtime: u64,
    pub object_id: ObjectId,
    pub size: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error reading trace: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

/// Streams requests from `object_id[,size]` lines.
pub struct CsvTraceReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    next_vtime: u64,
}

impl<R: BufRead> CsvTraceReader<R> {
    pub fn new(reader: R) -> Self {
        CsvTraceReader {
            lines: reader.lines(),
            line_no: 0,
            next_vtime: 0,
        }
    }
}

impl<R: BufRead> Iterator for CsvTraceReader<R> {
    type Item = Result<Request, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let item = parse_line(trimmed, self.line_no).map(|(object_id, size)| {
                let r = Request {
                    vtime: self.next_vtime,
                    object_id,
                    size,
                };
                self.next_vtime += 1;
                r
            });
            return Some(item);
        }
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<(ObjectId, u64), TraceError> {
    let err = |message: String| TraceError::Parse {
        line: line_no,
        message,
    };
    let mut fields = line.split(',').map(str::trim);
    let id = fields.next().unwrap_or_default();
    if id.is_empty() {
        return Err(err("empty object id".into()));
    }
    let size = match fields.next() {
        None => 1,
        Some(s) => {
            let v: i128 = s.parse().map_err(|_| err(format!("invalid size {s:?}")))?;
            if v <= 0 {
                return Err(err(format!("size must be positive, got {v}")));
            }
            u64::try_from(v).map_err(|_| err(format!("size {v} out of range")))?
        }
    };
    if fields.next().is_some() {
        return Err(err("expected `object_id` or `object_id,size`".into()));
    }
    Ok((ObjectId::from_token(id), size))
}

/// Reads a whole CSV trace into memory.
pub fn read_csv_trace(path: impl AsRef<Path>) -> Result<Vec<Request>, TraceError> {
    let file = File::open(path)?;
    CsvTraceReader::new(BufReader::new(file)).collect()
}

/// Parses CSV trace text already held in memory.
pub fn parse_csv_str(text: &str) -> Result<Vec<Request>, TraceError> {
    CsvTraceReader::new(text.as_bytes()).collect()
}

pub fn write_csv<W: Write>(mut out: W, trace: &[Request]) -> io::Result<()> {
    for r in trace {
        writeln!(out, "{},{}", r.object_id, r.size)?;
    }
    out.flush()
}

pub fn write_csv_trace(path: impl AsRef<Path>, trace: &[Request]) -> io::Result<()> {
    write_csv(BufWriter::new(File::create(path)?), trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeModel {
    Constant { bytes: u64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl SizeModel {
    fn sampler(&self) -> Result<SizeSampler, TraceError> {
        match *self {
            SizeModel::Constant { bytes } if bytes >= 1 => Ok(SizeSampler::Constant(bytes)),
            SizeModel::Constant { .. } => Err(TraceError::InvalidParams(
                "constant size must be ≥ 1".into(),
            )),
            SizeModel::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(SizeSampler::LogNormal)
                .map_err(|e| TraceError::InvalidParams(format!("lognormal: {e}"))),
        }
    }
}

enum SizeSampler {
    Constant(u64),
    LogNormal(LogNormal<f64>),
}

impl SizeSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            SizeSampler::Constant(c) => *c,
            SizeSampler::LogNormal(d) => {
                let v = d.sample(rng).round();
                if v.is_finite() {
                    v.clamp(1.0, 1e15) as u64
                } else {
                    1
                }
            }
        }
    }
}

/// Object sizes drawn once per id and then kept fixed.
struct SizeTable {
    sampler: SizeSampler,
    sizes: HashMap<ObjectId, u64>,
}

impl SizeTable {
    fn new(model: &SizeModel) -> Result<Self, TraceError> {
        Ok(SizeTable {
            sampler: model.sampler()?,
            sizes: HashMap::new(),
        })
    }

    fn size_of(&mut self, id: ObjectId, rng: &mut ChaCha8Rng) -> u64 {
        if let Some(s) = self.sizes.get(&id) {
            return *s;
        }
        let s = self.sampler.draw(rng);
        self.sizes.insert(id, s);
        s
    }
}

/// I.i.d. Zipf(alpha) draws over `num_objects` ids (`0..num_objects`, rank 1
/// is id 0). `alpha = 0` is uniform.
pub fn generate_zipf_trace(
    num_objects: u64,
    num_requests: usize,
    alpha: f64,
    size_model: SizeModel,
    seed: u64,
) -> Result<Vec<Request>, TraceError> {
    let spec = GeneratorSpec::Zipf {
        num_objects,
        alpha,
        size_model,
        id_offset: 0,
    };
    generate(&spec, num_requests, seed)
}

/// A single workload shape used as a trace phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Zipf-distributed popularity over `num_objects` ids starting at `id_offset`.
    Zipf {
        num_objects: u64,
        alpha: f64,
        size_model: SizeModel,
        id_offset: u64,
    },
    /// Every request touches a new id: `id_offset, id_offset + 1, ...`.
    Scan {
        size_model: SizeModel,
        id_offset: u64,
    },
    /// Cyclic sweep over `loop_len` ids.
    Loop {
        loop_len: u64,
        size_model: SizeModel,
        id_offset: u64,
    },
}

fn generate(spec: &GeneratorSpec, len: usize, seed: u64) -> Result<Vec<Request>, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    match spec {
        GeneratorSpec::Zipf {
            num_objects,
            alpha,
            size_model,
            id_offset,
        } => {
            if *num_objects == 0 || alpha.is_nan() || *alpha < 0.0 || !alpha.is_finite() {
                return Err(TraceError::InvalidParams(format!(
                    "zipf needs num_objects ≥ 1 and finite alpha ≥ 0 (got {num_objects}, {alpha})"
                )));
            }
            let mut sizes = SizeTable::new(size_model)?;
            let zipf = Zipf::new(*num_objects as f64, *alpha)
                .map_err(|e| TraceError::InvalidParams(format!("zipf: {e}")))?;
            for vtime in 0..len as u64 {
                let rank = zipf.sample(&mut rng) as u64;
                let id = ObjectId(id_offset + rank.clamp(1, *num_objects) - 1);
                let size = sizes.size_of(id, &mut rng);
                out.push(Request {
                    vtime,
                    object_id: id,
                    size,
                });
            }
        }
        GeneratorSpec::Scan {
            size_model,
            id_offset,
        } => {
            let sampler = size_model.sampler()?;
            for vtime in 0..len as u64 {
                let size = sampler.draw(&mut rng);
                out.push(Request {
                    vtime,
                    object_id: ObjectId(id_offset + vtime),
                    size,
                });
            }
        }
        GeneratorSpec::Loop {
            loop_len,
            size_model,
            id_offset,
        } => {
            if *loop_len == 0 {
                return Err(TraceError::InvalidParams("loop_len must be ≥ 1".into()));
            }
            let mut sizes = SizeTable::new(size_model)?;
            for vtime in 0..len as u64 {
                let id = ObjectId(id_offset + vtime % loop_len);
                let size = sizes.size_of(id, &mut rng);
                out.push(Request {
                    vtime,
                    object_id: id,
                    size,
                });
            }
        }
    }
    Ok(out)
}

/// One phase of a multi-phase trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub generator: GeneratorSpec,
    pub length: usize,
}

/// Concatenates phases and renumbers virtual time globally. Phase `i` is
/// generated with seed `seed + i * 0x9E37_79B9_7F4A_7C15` so phase 0 matches a
/// standalone generator run with `seed`.
pub fn generate_phase_trace(phases: &[Phase], seed: u64) -> Result<Vec<Request>, TraceError> {
    if phases.is_empty() {
        return Err(TraceError::InvalidParams("phase list is empty".into()));
    }
    let mut out = Vec::with_capacity(phases.iter().map(|p| p.length).sum());
    for (i, phase) in phases.iter().enumerate() {
        let phase_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for r in generate(&phase.generator, phase.length, phase_seed)? {
            out.push(Request {
                vtime: out.len() as u64,
                ..r
            });
        }
    }
    Ok(out)
}

/// Uniformly interleaves `other` into `base` with probability `mix` per slot,
/// renumbering virtual time. Both inputs are consumed in order.
pub fn interleave(base: &[Request], other: &[Request], mix: f64, seed: u64) -> Vec<Request> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(base.len() + other.len());
    while i < base.len() || j < other.len() {
        let take_other = j < other.len() && (i >= base.len() || rng.random::<f64>() < mix);
        let r = if take_other {
            j += 1;
            other[j - 1]
        } else {
            i += 1;
            base[i - 1]
        };
        out.push(Request {
            vtime: out.len() as u64,
            ..r
        });
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub total_requests: u64,
    pub unique_objects: u64,
    /// Sum of last-seen sizes over distinct objects.
    pub footprint_bytes: u64,
    pub one_hit_wonder_fraction: f64,
}

pub fn summarize(trace: &[Request]) -> TraceSummary {
    let mut seen: HashMap<ObjectId, (u64, u64)> = HashMap::new();
    for r in trace {
        let e = seen.entry(r.object_id).or_insert((0, r.size));
        e.0 += 1;
        e.1 = r.size;
    }
    let unique = seen.len() as u64;
    let footprint = seen.values().map(|(_, s)| *s).sum();
    let one_hit = seen.values().filter(|(c, _)| *c == 1).count() as u64;
    TraceSummary {
        total_requests: trace.len() as u64,
        unique_objects: unique,
        footprint_bytes: footprint,
        one_hit_wonder_fraction: if unique == 0 {
            0.0
        } else {
            one_hit as f64 / unique as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(vtime: u64, id: &str, size: u64) -> Request {
        Request {
            vtime,
            object_id: ObjectId::from_token(id),
            size,
        }
    }

    #[test]
    fn parses_sized_lines() {
        let t = parse_csv_str("a,100\nb,50\na,100").unwrap();
        assert_eq!(t, vec![req(0, "a", 100), req(1, "b", 50), req(2, "a", 100)]);
    }

    #[test]
    fn size_defaults_to_one() {
        let t = parse_csv_str("a\nb").unwrap();
        assert_eq!(t, vec![req(0, "a", 1), req(1, "b", 1)]);
    }

    #[test]
    fn rejects_non_positive_size() {
        match parse_csv_str("a,-5") {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_csv_str("# header\n\nx,1\ny,0") {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_csv_str("a,1,2").is_err());
        assert!(parse_csv_str("a,big").is_err());
    }

    #[test]
    fn comments_and_blanks_do_not_consume_vtime() {
        let t = parse_csv_str("# c\n\n7,3\n  # x\n8").unwrap();
        assert_eq!(
            t,
            vec![
                Request {
                    vtime: 0,
                    object_id: ObjectId(7),
                    size: 3
                },
                Request {
                    vtime: 1,
                    object_id: ObjectId(8),
                    size: 1
                },
            ]
        );
    }

    #[test]
    fn uniform_zipf_is_flat() {
        let n = 10u64;
        let draws = 1_000_000;
        let t = generate_zipf_trace(n, draws, 0.0, SizeModel::Constant { bytes: 1 }, 1).unwrap();
        let mut counts = vec![0u64; n as usize];
        for r in &t {
            counts[r.object_id.0 as usize] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sd,
                "count {c} outside 3σ of {mean}"
            );
        }
    }

    #[test]
    fn zipf_rank_ratio_matches_pmf() {
        // pmf(1)/pmf(2) = 2^alpha = 2 for alpha = 1.
        let t =
            generate_zipf_trace(100, 100_000, 1.0, SizeModel::Constant { bytes: 1 }, 5).unwrap();
        let c1 = t.iter().filter(|r| r.object_id == ObjectId(0)).count() as f64;
        let c2 = t.iter().filter(|r| r.object_id == ObjectId(1)).count() as f64;
        let expected = 2f64.powf(1.0);
        assert!(
            ((c1 / c2) - expected).abs() / expected < 0.10,
            "ratio {}",
            c1 / c2
        );
    }

    #[test]
    fn zipf_is_deterministic_and_sizes_stick() {
        let m = SizeModel::LogNormal {
            mu: 6.0,
            sigma: 1.0,
        };
        let a = generate_zipf_trace(50, 5000, 0.8, m, 3).unwrap();
        let b = generate_zipf_trace(50, 5000, 0.8, m, 3).unwrap();
        assert_eq!(a, b);
        let mut sizes = HashMap::new();
        for r in &a {
            assert_eq!(*sizes.entry(r.object_id).or_insert(r.size), r.size);
        }
        assert!(generate_zipf_trace(0, 5, 1.0, m, 0).is_err());
    }

    #[test]
    fn single_phase_equals_plain_generator() {
        let m = SizeModel::Constant { bytes: 4 };
        let phase = Phase {
            generator: GeneratorSpec::Zipf {
                num_objects: 30,
                alpha: 0.9,
                size_model: m,
                id_offset: 0,
            },
            length: 700,
        };
        assert_eq!(
            generate_phase_trace(&[phase], 42).unwrap(),
            generate_zipf_trace(30, 700, 0.9, m, 42).unwrap()
        );
    }

    #[test]
    fn phase_lengths_add_and_vtime_renumbers() {
        let m = SizeModel::Constant { bytes: 1 };
        let t = generate_phase_trace(
            &[
                Phase {
                    generator: GeneratorSpec::Scan {
                        size_model: m,
                        id_offset: 0,
                    },
                    length: 100,
                },
                Phase {
                    generator: GeneratorSpec::Loop {
                        loop_len: 7,
                        size_model: m,
                        id_offset: 1000,
                    },
                    length: 200,
                },
            ],
            1,
        )
        .unwrap();
        assert_eq!(summarize(&t).total_requests, 300);
        assert!(t.iter().enumerate().all(|(i, r)| r.vtime == i as u64));
        assert!(generate_phase_trace(&[], 0).is_err());
    }

    #[test]
    fn summary_hand_count() {
        let t = vec![req(0, "a", 100), req(1, "b", 50), req(2, "a", 100)];
        let s = summarize(&t);
        assert_eq!((s.unique_objects, s.footprint_bytes), (2, 150));
        assert_eq!(s.one_hit_wonder_fraction, 0.5);
        assert_eq!(summarize(&[]), TraceSummary::default());
    }

    #[test]
    fn footprint_uses_last_seen_size() {
        let t = vec![req(0, "a", 10), req(1, "a", 30), req(2, "b", 5)];
        assert_eq!(summarize(&t).footprint_bytes, 35);
    }

    #[test]
    fn interleave_keeps_both_orders() {
        let m = SizeModel::Constant { bytes: 1 };
        let a = generate(
            &GeneratorSpec::Loop {
                loop_len: 5,
                size_model: m,
                id_offset: 0,
            },
            50,
            0,
        )
        .unwrap();
        let b = generate(
            &GeneratorSpec::Scan {
                size_model: m,
                id_offset: 100,
            },
            30,
            0,
        )
        .unwrap();
        let t = interleave(&a, &b, 0.3, 9);
        assert_eq!(t.len(), 80);
        let from_b: Vec<_> = t
            .iter()
            .filter(|r| r.object_id.0 >= 100)
            .map(|r| r.object_id)
            .collect();
        assert_eq!(from_b, b.iter().map(|r| r.object_id).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn csv_round_trip(ids in prop::collection::vec((0u64..1000, 1u64..1_000_000), 0..200)) {
            let trace: Vec<Request> = ids.iter().enumerate()
                .map(|(i, (id, s))| Request { vtime: i as u64, object_id: ObjectId(*id), size: *s })
                .collect();
            let mut buf = Vec::new();
            write_csv(&mut buf, &trace).unwrap();
            let back = parse_csv_str(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, trace);
        }

        #[test]
        fn summary_totals_add(n1 in 0usize..300, n2 in 0usize..300, seed in any::<u64>()) {
            let m = SizeModel::Constant { bytes: 1 };
            let t1 = generate_zipf_trace(40, n1.max(1), 1.0, m, seed).unwrap();
            let t2 = generate_zipf_trace(40, n2.max(1), 0.5, m, seed ^ 1).unwrap();
            let joined: Vec<Request> = t1.iter().chain(t2.iter()).copied().collect();
            prop_assert_eq!(summarize(&joined).total_requests, summarize(&t1).total_requests + summarize(&t2).total_requests);
        }
    }
}
