//! Span-based keyphrase extraction.
//!
//! Candidate phrases are POS-pattern spans over a tagged document. Each span
//! is represented by the boundary states of a token-level Bi-LSTM (identity,
//! element-wise product and difference blocks), a second Bi-LSTM runs over
//! the candidate sequence so phrases can interact, and a linear head scores
//! every candidate. Training uses either a weighted cross-entropy or a
//! pairwise hinge objective; evaluation is micro-averaged F1@k over stemmed
//! matches.

pub mod candgen;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use candgen::{Label, LabeledCandidate, Span};
pub use checkpoint::Checkpoint;
pub use corpus::{Corpus, TaggedDocument};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, ScoredPhrase};
pub use model::{FeatureStore, Head, ModelConfig, Objective, SkeModel, TokenFeatureSource, Vocab};
pub use tensor::Tensor;
pub use train::{TrainConfig, TrainOutcome};
