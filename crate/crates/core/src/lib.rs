//! Weakly-supervised aspect-based sentiment analysis: lexicon acquisition
//! from unlabeled parsed text, and lexicon-driven classification.

pub mod bootstrap;
pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod pipeline;
pub mod polarity;
pub mod report;
pub mod rerank;
pub mod rules;

pub use error::{Error, Result};
