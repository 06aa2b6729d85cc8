//! Scientific term extraction and method recommendation.
//!
//! The crate is organized as a pipeline of loosely coupled stages:
//!
//! - [`corpus`]: paper records, tokenization, IOB span encoding, CoNLL files
//! - [`tagger`]: linear-chain CRF inference and training, including training
//!   on constrained lattices of uncertain labels
//! - [`graph_ssl`]: token similarity graphs, measure propagation and the
//!   self-training loop built on top of the tagger
//! - [`linker`]: surface normalization, acronym detection and clustering of
//!   term variants into entities
//! - [`kg`]: the triple store, co-occurrence extraction, auxiliary relations,
//!   relation paths and temporal splits
//! - [`embed`]: bilinear and path-augmented relational embeddings
//! - [`rank`]: link prediction ranking, MRR / Hits@k and recommendation
//! - [`pipeline`]: file-mediated commands wired together by the CLI
//!
//! [`synthetic`] holds seeded generators for the planted datasets used by
//! the test suites.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod graph_ssl;
pub mod kg;
pub mod linker;
pub mod pipeline;
pub mod rank;
pub mod synthetic;
pub mod tagger;

pub use error::{Error, Result};
