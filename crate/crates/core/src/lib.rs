//! Contract-variability analysis: paged corpus ingestion, term-match
//! heatmaps, LDA topics, paragraph embeddings, similarity search and
//! relevance evaluation.

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod error;
pub mod simsearch;
pub mod termmatch;
pub mod textprep;
pub mod topics;
pub mod workspace;

pub use error::{Error, Result};
