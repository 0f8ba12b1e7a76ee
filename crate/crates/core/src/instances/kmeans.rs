//! Seeded k-means++ / Lloyd clustering in z-scored space, plus the
//! nearest-centroid classifier with a novelty radius.

use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::stats::nearest_rank;

use super::features::{FeatureVector, FEATURE_NAMES, FEATURE_VERSION};

/// Model files carry this tag so stale formats are rejected on load.
pub const MODEL_VERSION: &str = "v1";
pub const DEFAULT_NOVELTY_FACTOR: f64 = 1.5;
/// Member-distance percentile used as each cluster's novelty radius.
pub const RADIUS_PERCENTILE: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("k = {k} but only {n} vectors")]
    TooFewVectors { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vectors have inconsistent dimensions")]
    Ragged,
    #[error("non-finite value in input vector {0}")]
    NonFinite(usize),
    #[error("model version {found:?} is not {MODEL_VERSION:?}")]
    Version { found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Independent k-means++ starts; the lowest-inertia run is kept.
    pub restarts: usize,
    pub novelty_factor: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iters: 300,
            restarts: 1,
            novelty_factor: DEFAULT_NOVELTY_FACTOR,
        }
    }
}

/// A trained, immutable cluster model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub version: String,
    /// Names of the input dimensions; empty for anonymous vectors.
    pub features: Vec<String>,
    pub feature_version: Option<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Centroids in standardized space.
    pub centroids: Vec<Vec<f64>>,
    /// Per-cluster p95 distance of members to their centroid.
    pub radii: Vec<f64>,
    pub novelty_factor: f64,
    pub seed: u64,
    pub inertia: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Cluster(usize),
    /// Too far from every centroid; carries the nearest cluster.
    Novel {
        nearest: usize,
    },
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Cluster(c) => write!(f, "{c}"),
            Classification::Novel { .. } => f.write_str("novel"),
        }
    }
}

/// A model plus training-time diagnostics.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Inertia after each Lloyd iteration of the kept run.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Per-dimension mean and population standard deviation; σ = 0 becomes 1.
fn standardization(vectors: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = vectors.len() as f64;
    let dims = vectors[0].len();
    let mean: Vec<f64> = (0..dims)
        .map(|d| vectors.iter().map(|v| v[d]).sum::<f64>() / n)
        .collect();
    let std = (0..dims)
        .map(|d| {
            let var = vectors
                .iter()
                .map(|v| (v[d] - mean[d]).powi(2))
                .sum::<f64>()
                / n;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardize(v: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| (x - m) / s)
        .collect()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // All remaining points coincide with a centre.
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    inertia_history: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> Run {
    let k = centroids.len();
    let dims = points[0].len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut inertia_history = Vec::new();
    for _ in 0..max_iters {
        // Update step; an empty cluster keeps its previous centroid.
        let mut sums = vec![vec![0.0; dims]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        // Assignment step.
        let mut changed = false;
        let mut inertia = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (best, d) = nearest(p, &centroids);
            inertia += d;
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }
    }
    Run {
        centroids,
        assignments,
        inertia_history,
    }
}

fn check_input(vectors: &[Vec<f64>], k: usize) -> Result<(), ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > vectors.len() {
        return Err(ClusterError::TooFewVectors {
            k,
            n: vectors.len(),
        });
    }
    let dims = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dims) {
        return Err(ClusterError::Ragged);
    }
    if let Some(i) = vectors
        .iter()
        .position(|v| v.iter().any(|x| !x.is_finite()))
    {
        return Err(ClusterError::NonFinite(i));
    }
    Ok(())
}

/// Trains on raw vectors: z-scores them, then runs seeded k-means++ and
/// Lloyd iterations until the assignment is a fixpoint or `max_iters`.
pub fn kmeans(vectors: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansFit, ClusterError> {
    check_input(vectors, config.k)?;
    let (mean, std) = standardization(vectors);
    let points: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| standardize(v, &mean, &std))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Run)> = None;
    for _ in 0..config.restarts.max(1) {
        let init = init_plus_plus(&points, config.k, &mut rng);
        let run = lloyd(&points, init, config.max_iters.max(1));
        let inertia: f64 = points
            .iter()
            .zip(&run.assignments)
            .map(|(p, &a)| sq_dist(p, &run.centroids[a]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, run));
        }
    }
    let (inertia, run) = best.expect("at least one restart");
    let radii = (0..config.k)
        .map(|c| {
            let mut d: Vec<f64> = points
                .iter()
                .zip(&run.assignments)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| sq_dist(p, &run.centroids[c]).sqrt())
                .collect();
            if d.is_empty() {
                return 0.0;
            }
            d.sort_by(f64::total_cmp);
            d[nearest_rank(RADIUS_PERCENTILE, d.len() as u64) as usize - 1]
        })
        .collect();
    let model = ClusterModel {
        version: MODEL_VERSION.to_string(),
        features: Vec::new(),
        feature_version: None,
        mean,
        std,
        centroids: run.centroids,
        radii,
        novelty_factor: config.novelty_factor,
        seed: config.seed,
        inertia,
    };
    Ok(KMeansFit {
        model,
        assignments: run.assignments,
        inertia_history: run.inertia_history,
    })
}

/// Trains on trace feature vectors and records the feature list in the model.
pub fn kmeans_features(
    vectors: &[FeatureVector],
    config: &KMeansConfig,
) -> Result<KMeansFit, ClusterError> {
    let raw: Vec<Vec<f64>> = vectors.iter().map(|v| v.0.to_vec()).collect();
    let mut fit = kmeans(&raw, config)?;
    fit.model.features = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    fit.model.feature_version = Some(FEATURE_VERSION.to_string());
    Ok(fit)
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Distance to each centroid in standardized space.
    pub fn distances(&self, raw: &[f64]) -> Vec<f64> {
        let z = standardize(raw, &self.mean, &self.std);
        self.centroids
            .iter()
            .map(|c| sq_dist(&z, c).sqrt())
            .collect()
    }

    /// Nearest centroid, or novel when the distance exceeds that cluster's
    /// radius times the novelty factor.
    pub fn classify(&self, raw: &[f64]) -> Classification {
        let d = self.distances(raw);
        let (c, dist) = d
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, x)| if x < best.1 { (i, x) } else { best },
            );
        if dist > self.radii[c] * self.novelty_factor {
            Classification::Novel { nearest: c }
        } else {
            Classification::Cluster(c)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<ClusterModel, ClusterError> {
        let m: ClusterModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(ClusterError::Version { found: m.version });
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClusterError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ClusterModel, ClusterError> {
        ClusterModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes `trace,cluster` rows.
pub fn write_assignments<W: Write>(out: W, rows: &[(String, usize)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trace", "cluster"])?;
    for (name, c) in rows {
        w.write_record([name.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Purity of a clustering against ground-truth labels: the fraction of
/// points whose cluster's majority label equals their own.
pub fn purity(clusters: &[usize], labels: &[usize]) -> f64 {
    use std::collections::HashMap;
    let mut votes: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&c, &l) in clusters.iter().zip(labels) {
        *votes.entry(c).or_default().entry(l).or_default() += 1;
    }
    let majority: usize = votes
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / clusters.len().max(1) as f64
}
