//! Token clustering of the unembedding and divergence-based specialization
//! scores of experts.

mod baseline;
mod distribution;
mod jsd;
mod kmeans;
mod report;

pub use baseline::{random_baseline, sample_multinomial, Baseline};
pub use distribution::{
    functional_distribution, routing_distribution, ClusterDistribution, DistributionKind, LayerTokenCounts,
};
pub use jsd::jsd;
pub use kmeans::{cluster_unembedding, kmeans, token_vectors, ClusterMap};
pub use report::{
    base_rate, specialization_report, write_scores_csv, write_series_json, ExpertScore, LayerPoint,
    SpecializationParams, SpecializationReport,
};
