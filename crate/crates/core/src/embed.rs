//! Embedding matrices, the deterministic synthetic embedder and the
//! `DVE1`/`MVE1` embedding file format.
//!
//! The synthetic embedder maps every token to a fixed pseudo-random unit
//! vector: the token's 64-bit FNV-1a hash, mixed with the seed, seeds a
//! splitmix64 stream whose outputs are mapped to uniform(-1, 1) and then
//! L2-normalized. Independent tokens are therefore nearly orthogonal and
//! identical tokens match with similarity exactly 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::tokenize::tokenize;
use crate::vector;

/// `rows x dim` row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidData(format!(
                "embedding matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if values.len() != rows * dim {
            return Err(Error::InvalidData(format!(
                "{} values for a {rows}x{dim} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {} column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Passage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub mode: Representation,
    pub dim: usize,
    /// Query rows in multi mode; queries are truncated or zero-padded to this.
    pub q_len: usize,
    pub max_doc_tokens: usize,
    pub seed: u64,
}

impl EmbedderConfig {
    pub fn single() -> Self {
        Self {
            mode: Representation::Single,
            dim: 768,
            q_len: 1,
            max_doc_tokens: 1,
            seed: 0,
        }
    }

    pub fn multi() -> Self {
        Self {
            mode: Representation::Multi,
            dim: 128,
            q_len: 32,
            max_doc_tokens: 180,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if self.mode == Representation::Multi && (self.q_len == 0 || self.max_doc_tokens == 0) {
            return Err(Error::InvalidParameter(
                "q_len and max_doc_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed pseudo-random unit vector for `token`.
pub fn synthetic_token_vector(token: &str, dim: usize, seed: u64) -> Result<Vec<f32>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    if token.is_empty() {
        return Err(Error::InvalidParameter("empty token".into()));
    }
    let mut seed_state = seed;
    let mut state = fnv1a64(token.as_bytes()) ^ splitmix64(&mut seed_state);
    let raw: Vec<f64> = (0..dim)
        .map(|_| {
            let u = (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64;
            2.0 * u - 1.0
        })
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidData(format!("degenerate vector for {token:?}")));
    }
    Ok(raw.iter().map(|x| (x / norm) as f32).collect())
}

/// Stateless text embedder driven by [`synthetic_token_vector`].
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    config: EmbedderConfig,
}

impl SyntheticEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        synthetic_token_vector(token, self.config.dim, self.config.seed)
            .expect("config validated and tokens are non-empty")
    }

    pub fn embed(&self, text: &str, side: Side) -> EmbeddingMatrix {
        match self.config.mode {
            Representation::Single => self.embed_single(text),
            Representation::Multi => self.embed_multi(text, side),
        }
    }

    /// One row: the L2-normalized mean of the token vectors. Empty text
    /// gives the zero vector.
    pub fn embed_single(&self, text: &str) -> EmbeddingMatrix {
        let dim = self.config.dim;
        let tokens = tokenize(text);
        let mut acc = vec![0f64; dim];
        for tok in &tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += x as f64;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let values = if norm > 0.0 {
            acc.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; dim]
        };
        EmbeddingMatrix { rows: 1, dim, values }
    }

    /// One row per token. Queries are cut or zero-padded to exactly `q_len`
    /// rows; passages are cut at `max_doc_tokens` and an empty passage is a
    /// single zero row.
    pub fn embed_multi(&self, text: &str, side: Side) -> EmbeddingMatrix {
        let dim = self.config.dim;
        let tokens = tokenize(text);
        let (limit, rows) = match side {
            Side::Query => (self.config.q_len, self.config.q_len),
            Side::Passage => {
                let n = tokens.len().min(self.config.max_doc_tokens);
                (n, n.max(1))
            }
        };
        let mut values = Vec::with_capacity(rows * dim);
        for tok in tokens.iter().take(limit) {
            values.extend(self.token_vector(tok));
        }
        values.resize(rows * dim, 0.0);
        EmbeddingMatrix { rows, dim, values }
    }

    /// Token labels aligned with the rows `embed_multi` produces.
    pub fn row_labels(&self, text: &str, side: Side) -> Vec<String> {
        let mut tokens = tokenize(text);
        match side {
            Side::Query => {
                tokens.truncate(self.config.q_len);
                tokens.resize(self.config.q_len, "[pad]".to_string());
            }
            Side::Passage => {
                tokens.truncate(self.config.max_doc_tokens);
                if tokens.is_empty() {
                    tokens.push("[empty]".to_string());
                }
            }
        }
        tokens
    }
}

const MAGIC_SINGLE: &[u8; 4] = b"DVE1";
const MAGIC_MULTI: &[u8; 4] = b"MVE1";

/// Contents of an embedding file: one matrix per id, all of the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub representation: Representation,
    pub dim: usize,
    pub records: Vec<(String, EmbeddingMatrix)>,
}

impl EmbeddingFile {
    pub fn new(representation: Representation, ids: Vec<String>, matrices: Vec<EmbeddingMatrix>) -> Result<Self> {
        if ids.len() != matrices.len() {
            return Err(Error::InvalidData(format!(
                "{} ids for {} matrices",
                ids.len(),
                matrices.len()
            )));
        }
        let dim = matrices.first().map_or(0, EmbeddingMatrix::dim);
        for m in &matrices {
            if m.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: m.dim(),
                });
            }
            if representation == Representation::Single && m.rows() != 1 {
                return Err(Error::InvalidData(format!(
                    "single-representation record with {} rows",
                    m.rows()
                )));
            }
        }
        Ok(Self {
            representation,
            dim,
            records: ids.into_iter().zip(matrices).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(match self.representation {
            Representation::Single => MAGIC_SINGLE,
            Representation::Multi => MAGIC_MULTI,
        });
        binio::put_len(&mut out, self.dim)?;
        binio::put_u64(&mut out, self.records.len() as u64);
        for (id, m) in &self.records {
            if m.dim() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    actual: m.dim(),
                });
            }
            binio::put_str(&mut out, id)?;
            binio::put_len(&mut out, m.rows())?;
            binio::put_f32s(&mut out, m.values());
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, "embedding file");
        let representation = match &r.magic(&[MAGIC_SINGLE, MAGIC_MULTI])? {
            m if m == MAGIC_SINGLE => Representation::Single,
            _ => Representation::Multi,
        };
        let dim = r.len_u32()?;
        if dim == 0 {
            return Err(Error::Format("embedding file: dim is 0".into()));
        }
        let count = r.u64()?;
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for i in 0..count {
            let id = r.string()?;
            let rows = r.len_u32()?;
            if rows == 0 {
                return Err(Error::Format(format!("record {i} ({id}) has 0 rows")));
            }
            if representation == Representation::Single && rows != 1 {
                return Err(Error::Format(format!(
                    "record {i} ({id}) has {rows} rows in a single-representation file"
                )));
            }
            let values = r.f32s(rows * dim)?;
            records.push((id, EmbeddingMatrix::new(rows, dim, values)?));
        }
        r.finish()?;
        Ok(Self {
            representation,
            dim,
            records,
        })
    }
}

pub fn write_embeddings(file: &EmbeddingFile, path: &Path) -> Result<()> {
    let bytes = file.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingFile::from_bytes(&bytes)
}

/// Checks that a matrix is usable as a query for `dim`-wide indexes.
pub(crate) fn check_dim(m: &EmbeddingMatrix, dim: usize) -> Result<()> {
    if m.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: m.dim(),
        });
    }
    Ok(())
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    vector::dot(a, b) / (vector::norm(a) * vector::norm(b))
}
