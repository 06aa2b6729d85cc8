//! Linear-chain CRF tagger.

mod eval;
pub mod features;
mod lattice;
mod model;
mod train;

pub use eval::{span_f1, MatchMode, Prf};
pub use lattice::{
    build_lattice, constrained_log_partition, forward_backward, log_partition, posterior_decode,
    sequence_probability, sequence_score, token_marginals, ulm_likelihood, ulm_log_likelihood,
    viterbi_decode, ConstrainedLattice, ForwardBackward, ScoreLattice, TransitionMatrix,
};
pub use model::{CrfModel, EmissionScorer, Prediction, TagAlphabet};
pub use train::{minimize, train_crf, train_crf_ulm, CrfObjective, CrfTrainConfig, TrainReport, UlmExample};
