//! Multi-representation retrieval: approximate candidate generation over
//! token embeddings followed by exact max-sim re-scoring, plus the
//! per-token interaction breakdown of a single score.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::corpus::Ranking;
use crate::embed::{check_dim, EmbeddingFile, EmbeddingMatrix, Representation};
use crate::error::{Error, Result};
use crate::ivfpq::{IvfPqIndex, IvfPqParams, ResolvedParams, TokenRef};
use crate::topk::{top_k, Scored};
use crate::vector;

/// Sum over query rows of the best inner product with any document row.
pub fn maxsim_score(q: &EmbeddingMatrix, d: &EmbeddingMatrix) -> Result<f64> {
    check_dim(d, q.dim())?;
    Ok(maxsim_rows(q, d.values()))
}

fn maxsim_rows(q: &EmbeddingMatrix, doc: &[f32]) -> f64 {
    let dim = q.dim();
    q.iter_rows()
        .map(|qr| {
            doc.chunks_exact(dim)
                .map(|dr| vector::dot(qr, dr))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Exact per-passage token embeddings in one contiguous array.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStore {
    dim: usize,
    values: Vec<f32>,
    /// passage `p` owns rows `offsets[p]..offsets[p + 1]`
    offsets: Vec<usize>,
}

impl TokenStore {
    pub fn build<'a>(dim: usize, matrices: impl IntoIterator<Item = &'a EmbeddingMatrix>) -> Result<Self> {
        let mut values = Vec::new();
        let mut offsets = vec![0];
        for m in matrices {
            check_dim(m, dim)?;
            values.extend_from_slice(m.values());
            offsets.push(offsets.last().unwrap() + m.rows());
        }
        if offsets.len() == 1 {
            return Err(Error::InvalidData("token store needs at least one passage".into()));
        }
        Ok(Self { dim, values, offsets })
    }

    pub fn from_embeddings(file: &EmbeddingFile) -> Result<Self> {
        if file.representation != Representation::Multi {
            return Err(Error::Format("token store needs an MVE1 (multi) file".into()));
        }
        Self::build(file.dim, file.records.iter().map(|(_, m)| m))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_tokens(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn rows(&self, passage: usize) -> Option<&[f32]> {
        let (start, end) = (*self.offsets.get(passage)?, *self.offsets.get(passage + 1)?);
        Some(&self.values[start * self.dim..end * self.dim])
    }

    pub fn matrix(&self, passage: usize) -> Option<EmbeddingMatrix> {
        let rows = self.rows(passage)?;
        EmbeddingMatrix::new(rows.len() / self.dim, self.dim, rows.to_vec()).ok()
    }

    pub fn token_refs(&self) -> Vec<TokenRef> {
        self.offsets
            .windows(2)
            .enumerate()
            .flat_map(|(p, w)| {
                (0..w[1] - w[0]).map(move |t| TokenRef {
                    passage: p as u32,
                    token: t as u32,
                })
            })
            .collect()
    }

    /// Row-offset sidecar: `TOFF`, u32 version, u64 passage count, then
    /// count + 1 u64 offsets, little-endian.
    pub fn offsets_to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.offsets.len());
        out.extend_from_slice(OFFSETS_MAGIC);
        binio::put_u32(&mut out, 1);
        binio::put_u64(&mut out, self.len() as u64);
        for &o in &self.offsets {
            binio::put_u64(&mut out, o as u64);
        }
        out
    }

    /// Checks a sidecar against this store.
    pub fn verify_offsets(&self, buf: &[u8]) -> Result<()> {
        let mut r = Reader::new(buf, "offsets sidecar");
        r.magic(&[OFFSETS_MAGIC])?;
        if r.u32()? != 1 {
            return Err(Error::Format("offsets sidecar: unknown version".into()));
        }
        let n = r.u64()? as usize;
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(r.u64()? as usize);
        }
        r.finish()?;
        if offsets != self.offsets {
            return Err(Error::Format("offsets sidecar does not match the token store".into()));
        }
        Ok(())
    }
}

const OFFSETS_MAGIC: &[u8; 4] = b"TOFF";

/// Union of the passages owning the `k_per_emb` approximate nearest tokens
/// of every non-zero query row.
pub fn generate_candidates(
    index: &IvfPqIndex,
    q: &EmbeddingMatrix,
    k_per_emb: usize,
    nprobe: usize,
) -> Result<BTreeSet<usize>> {
    if k_per_emb == 0 {
        return Err(Error::InvalidParameter("k_per_emb must be >= 1".into()));
    }
    check_dim(q, index.dim())?;
    let mut out = BTreeSet::new();
    for row in q.iter_rows().filter(|r| !vector::is_zero(r)) {
        for hit in index.search(row, k_per_emb, nprobe)? {
            out.insert(index.token(hit.id).passage as usize);
        }
    }
    Ok(out)
}

/// Exact max-sim of every candidate; best `k` first, ties by ordinal.
pub fn rank_candidates(
    store: &TokenStore,
    q: &EmbeddingMatrix,
    candidates: &BTreeSet<usize>,
    k: usize,
) -> Result<Vec<Scored>> {
    check_dim(q, store.dim())?;
    if let Some(&bad) = candidates.iter().find(|&&c| c >= store.len()) {
        return Err(Error::UnknownId(format!("passage ordinal {bad}")));
    }
    let scored: Vec<Scored> = candidates
        .par_iter()
        .map(|&c| Scored {
            id: c,
            score: maxsim_rows(q, store.rows(c).unwrap()),
        })
        .collect();
    Ok(top_k(scored, k))
}

/// Per-cell similarities behind one max-sim score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub query_tokens: Vec<String>,
    pub doc_tokens: Vec<String>,
    /// `query rows x doc rows`
    pub matrix: Vec<Vec<f64>>,
    /// best doc row for each query row
    pub argmax: Vec<usize>,
    pub contributions: Vec<f64>,
    pub score: f64,
}

pub fn explain_interaction(
    q: &EmbeddingMatrix,
    d: &EmbeddingMatrix,
    q_labels: &[String],
    d_labels: &[String],
) -> Result<InteractionReport> {
    check_dim(d, q.dim())?;
    if q_labels.len() != q.rows() || d_labels.len() != d.rows() {
        return Err(Error::InvalidData(format!(
            "labels {}x{} do not match a {}x{} interaction",
            q_labels.len(),
            d_labels.len(),
            q.rows(),
            d.rows()
        )));
    }
    let matrix: Vec<Vec<f64>> = q
        .iter_rows()
        .map(|qr| d.iter_rows().map(|dr| vector::dot(qr, dr)).collect())
        .collect();
    let mut argmax = Vec::with_capacity(matrix.len());
    let mut contributions = Vec::with_capacity(matrix.len());
    for row in &matrix {
        let (j, v) = row.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (j, &v)| if v > best.1 { (j, v) } else { best },
        );
        argmax.push(j);
        contributions.push(v);
    }
    Ok(InteractionReport {
        query_tokens: q_labels.to_vec(),
        doc_tokens: d_labels.to_vec(),
        score: contributions.iter().sum(),
        matrix,
        argmax,
        contributions,
    })
}

/// Search-time knobs of the two-stage pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiSearchParams {
    pub k_per_emb: usize,
    pub nprobe: usize,
}

impl Default for MultiSearchParams {
    fn default() -> Self {
        Self {
            k_per_emb: 100,
            nprobe: 16,
        }
    }
}

/// ANN index over all passage tokens plus the exact store used for
/// re-scoring.
#[derive(Debug, Clone)]
pub struct MultiRetriever {
    pub index: IvfPqIndex,
    pub store: TokenStore,
    pub ids: Vec<String>,
}

impl MultiRetriever {
    pub fn build(store: TokenStore, ids: Vec<String>, params: &IvfPqParams) -> Result<(Self, ResolvedParams)> {
        if ids.len() != store.len() {
            return Err(Error::InvalidData(format!(
                "{} ids for {} passages",
                ids.len(),
                store.len()
            )));
        }
        let (index, resolved) = IvfPqIndex::build(store.values(), store.dim(), store.token_refs(), params)?;
        Ok((Self { index, store, ids }, resolved))
    }

    pub fn search_ordinals(&self, q: &EmbeddingMatrix, k: usize, params: MultiSearchParams) -> Result<Vec<Scored>> {
        let nprobe = params.nprobe.min(self.index.nlist());
        let candidates = generate_candidates(&self.index, q, params.k_per_emb, nprobe)?;
        rank_candidates(&self.store, q, &candidates, k)
    }

    pub fn search(&self, query_id: &str, q: &EmbeddingMatrix, k: usize, params: MultiSearchParams) -> Result<Ranking> {
        let hits = self.search_ordinals(q, k, params)?;
        Ok(Ranking::new(
            query_id,
            hits.into_iter().map(|h| (self.ids[h.id].clone(), h.score)).collect(),
        ))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mats = (0..self.store.len())
            .map(|p| self.store.matrix(p).expect("passage in range"))
            .collect();
        let file = EmbeddingFile::new(Representation::Multi, self.ids.clone(), mats)?;
        write_bytes(&dir.join(TOKENS_FILE), &file.to_bytes()?)?;
        write_bytes(&dir.join(OFFSETS_FILE), &self.store.offsets_to_bytes())?;
        write_bytes(&dir.join(INDEX_FILE), &self.index.to_bytes()?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file = crate::embed::load_embeddings(&dir.join(TOKENS_FILE))?;
        let store = TokenStore::from_embeddings(&file)?;
        store.verify_offsets(&read_bytes(&dir.join(OFFSETS_FILE))?)?;
        let index = IvfPqIndex::from_bytes(&read_bytes(&dir.join(INDEX_FILE))?)?;
        if index.dim() != store.dim() || index.num_tokens() != store.num_tokens() {
            return Err(Error::Format("IVFPQ index does not match the token store".into()));
        }
        let ids = file.records.into_iter().map(|(id, _)| id).collect();
        Ok(Self { index, store, ids })
    }
}

pub const TOKENS_FILE: &str = "tokens.mve";
pub const OFFSETS_FILE: &str = "tokens.offsets";
pub const INDEX_FILE: &str = "index.ivpq";

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
