//! Approximate nearest-neighbour search: k-means coarse quantizer,
//! residual product quantization and inverted lists.

pub mod index;
pub mod kmeans;
pub mod pq;
mod recall;

pub use index::{pq_decode, pq_encode, IvfPqIndex, IvfPqParams, ResolvedParams, TokenRef};
pub use kmeans::{train_kmeans, Centroids};
pub use pq::{train_pq, PqCodebook};
pub use recall::{exact_top, measure_recall, Recall};
