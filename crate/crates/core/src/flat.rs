//! Exact inner-product search over one uncompressed vector per passage.

use rayon::prelude::*;

use crate::corpus::Ranking;
use crate::embed::{EmbeddingFile, EmbeddingMatrix, Representation};
use crate::error::{Error, Result};
use crate::topk::{top_k, Scored};
use crate::vector;

const SCAN_BLOCK: usize = 4096;

#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<String>,
}

impl FlatIndex {
    pub fn build(vectors: &[Vec<f32>], ids: Vec<String>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidData("flat index needs at least one vector".into()));
        }
        if vectors.len() != ids.len() {
            return Err(Error::InvalidData(format!(
                "{} vectors for {} ids",
                vectors.len(),
                ids.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::InvalidData("zero-dimensional vectors".into()));
        }
        let mut flat = Vec::with_capacity(vectors.len() * dim);
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite value in vector {i}")));
            }
            flat.extend_from_slice(v);
        }
        Ok(Self {
            dim,
            vectors: flat,
            ids,
        })
    }

    pub fn from_embeddings(file: &EmbeddingFile) -> Result<Self> {
        if file.representation != Representation::Single {
            return Err(Error::Format("flat index needs a DVE1 (single) file".into()));
        }
        let vectors: Vec<Vec<f32>> = file.records.iter().map(|(_, m)| m.row(0).to_vec()).collect();
        let ids = file.records.iter().map(|(id, _)| id.clone()).collect();
        Self::build(&vectors, ids)
    }

    pub fn to_embeddings(&self) -> EmbeddingFile {
        let mats = self
            .vectors
            .chunks_exact(self.dim)
            .map(|v| EmbeddingMatrix::new(1, self.dim, v.to_vec()).expect("validated at build"))
            .collect();
        EmbeddingFile::new(Representation::Single, self.ids.clone(), mats).expect("consistent dims")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    /// Top-`min(k, n)` ordinals by inner product, ties by ordinal.
    pub fn search_ordinals(&self, q: &[f32], k: usize) -> Result<Vec<Scored>> {
        if q.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        let block = SCAN_BLOCK * self.dim;
        // Each block keeps its own top-k; merging those is identical to one
        // sequential scan because the ordering is total.
        let partial: Vec<Vec<Scored>> = self
            .vectors
            .par_chunks(block)
            .enumerate()
            .map(|(b, chunk)| {
                let base = b * SCAN_BLOCK;
                top_k(
                    chunk.chunks_exact(self.dim).enumerate().map(|(i, x)| Scored {
                        id: base + i,
                        score: vector::dot(q, x),
                    }),
                    k,
                )
            })
            .collect();
        Ok(top_k(partial.into_iter().flatten(), k))
    }

    pub fn search(&self, query_id: &str, q: &[f32], k: usize) -> Result<Ranking> {
        let hits = self.search_ordinals(q, k)?;
        Ok(Ranking::new(
            query_id,
            hits.into_iter().map(|h| (self.ids[h.id].clone(), h.score)).collect(),
        ))
    }
}
