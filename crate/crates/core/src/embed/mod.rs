//! Bilinear entity/relation embeddings with optional relation-path features.

mod cluster;
mod grad;
pub mod io;
mod model;
mod train;

pub use cluster::{cluster_relations, Clustering};
pub use grad::{score_gradient, Gradient};
pub use model::EmbeddingModel;
pub use train::{
    corrupt, full_ranking_loss, pair_loss_gradient, ranking_loss, train, Corrupter, PathSettings, Scorer,
    TrainingConfig, TrainingReport,
};

#[cfg(test)]
mod tests;
