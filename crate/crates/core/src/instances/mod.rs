//! Workload instances: trace features, k-means clustering and the runtime
//! classifier that maps a new trace to a known instance or flags it as novel.

pub mod features;
pub mod kmeans;

pub use features::{
    extract_features, extract_many, FeatureVector, DEFAULT_PREFIX, FEATURE_NAMES, NUM_FEATURES,
};
pub use kmeans::{
    adjusted_rand_index, kmeans, kmeans_features, purity, write_assignments, Classification,
    ClusterError, ClusterModel, KMeansConfig, KMeansFit,
};
