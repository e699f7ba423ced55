//! Corpus-level bias tooling for small language-model sandboxes.
//!
//! The crate covers the full loop around a pre-training run without doing the
//! training itself: auditing a corpus for bias-related signals, producing
//! intervention corpora (counterfactual augmentation, toxicity removal,
//! perturbation), scoring checkpoints on bias and grammar benchmarks through a
//! uniform [`scorer::Scorer`] interface, removing bias directions from
//! embeddings, and the statistics used to compare the results.

pub mod analysis;
pub mod audit;
pub mod bench;
pub mod checkpoint;
pub mod client;
pub mod corpus;
pub mod error;
pub mod intervene;
pub mod lexicon;
pub mod manifest;
pub mod pipeline;
pub mod projection;
pub mod scorer;
pub mod text;

pub use error::{Error, Result};
