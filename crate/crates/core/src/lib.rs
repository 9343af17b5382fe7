//! Dense passage retrieval with single and multiple representations.
//!
//! * [`flat`]: one vector per passage, exact inner-product search.
//! * [`ivfpq`] + [`late`]: one vector per token, approximate candidate
//!   generation over compressed token embeddings, then exact max-sim
//!   re-scoring of every candidate.
//! * [`bm25`]: lexical baseline.
//! * [`eval`]: metrics, paired t-tests, difficulty classes, reward/risk and
//!   per-query delta reports for comparing systems against a baseline.

mod binio;
pub mod bm25;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod flat;
pub mod ivfpq;
pub mod late;
pub mod synth;
pub mod tokenize;
pub mod topk;
pub mod vector;

pub use corpus::{PassageStore, Qrels, QuerySet, Ranking};
pub use embed::{EmbedderConfig, EmbeddingMatrix, Representation, Side, SyntheticEmbedder};
pub use error::{Error, Result};
pub use tokenize::tokenize;
