//! Token similarity graph, label propagation over it, and the
//! self-training loop that feeds propagated posteriors back into the CRF.

mod features;
mod graph;
mod pca;
mod posterior;
mod propagate;
mod self_train;

pub use features::{feature_dim, token_features, EmbeddingTable, TokenFeatureVector, TokenRef};
pub use graph::{build_knn_graph, Edge, SimilarityGraph};
pub use pca::{pca_project, Pca};
pub use posterior::{graph_feat, graph_interp};
pub use propagate::{propagate, propagate_observed, propagation_objective, PropagationConfig, PropagationReport};
pub use self_train::{
    evaluate_predictions, self_train, PosteriorStrategy, RetrainObjective, RoundDiagnostics, SelfTrainConfig,
    SelfTrainInput, SelfTrainOutcome, SentenceDistributions, SslMode, TokenGraph,
};
