//! Extreme multi-label text classification.
//!
//! Generative multinomial models over sparse count documents, scored through
//! an inverted index, with optional transposed prediction, random parameter
//! search and a regression-based ensemble on top.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod inference;
pub mod metaopt;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod results;
pub mod rng;
pub mod sgm;
pub mod synth;
pub mod template;
pub mod weighting;

pub use error::{Error, Result};
