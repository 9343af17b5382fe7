use serde::Serialize;

use crate::error::{Error, Result};
use crate::ivfpq::IvfPqIndex;
use crate::topk::{top_k, Scored};
use crate::vector::dot;

/// Exact top-`k` rows of `base` by inner product with `q`.
pub fn exact_top(base: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<Scored> {
    top_k(
        base.chunks_exact(dim)
            .enumerate()
            .map(|(id, v)| Scored { id, score: dot(q, v) }),
        k,
    )
}

/// Search quality of an index against exhaustive search, averaged over
/// queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recall {
    pub k: usize,
    pub nprobe: usize,
    /// share of queries whose exact nearest neighbour is in the approximate top-k
    pub nearest: f64,
    /// mean |approximate top-k ∩ exact top-k| / k
    pub overlap: f64,
}

/// Token ids of the index must be the row numbers of `base`.
pub fn measure_recall(index: &IvfPqIndex, base: &[f32], queries: &[f32], k: usize, nprobe: usize) -> Result<Recall> {
    let dim = index.dim();
    if base.len() != index.num_tokens() * dim {
        return Err(Error::InvalidData(format!(
            "base has {} values, index holds {} vectors of dim {dim}",
            base.len(),
            index.num_tokens()
        )));
    }
    if queries.is_empty() || !queries.len().is_multiple_of(dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: queries.len() % dim,
        });
    }
    let (mut nearest, mut overlap) = (0.0, 0.0);
    let nq = queries.len() / dim;
    for q in queries.chunks_exact(dim) {
        let truth: Vec<usize> = exact_top(base, dim, q, k).into_iter().map(|s| s.id).collect();
        let got = index.search(q, k, nprobe)?;
        if got.iter().any(|s| s.id == truth[0]) {
            nearest += 1.0;
        }
        overlap += got.iter().filter(|s| truth.contains(&s.id)).count() as f64 / truth.len() as f64;
    }
    Ok(Recall {
        k,
        nprobe,
        nearest: nearest / nq as f64,
        overlap: overlap / nq as f64,
    })
}
