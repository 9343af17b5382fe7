//! Inverted-index BM25 baseline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{PassageStore, Ranking};
use crate::error::{Error, Result};
use crate::tokenize::tokenize;
use crate::topk::{top_k, Scored};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidParameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    /// term -> (passage ordinal, term frequency), ordinals ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    ids: Vec<String>,
    params: Bm25Params,
}

impl SparseIndex {
    pub fn build(store: &PassageStore, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if store.is_empty() {
            return Err(Error::InvalidData("cannot index an empty corpus".into()));
        }
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(store.len());
        for (ord, entry) in store.iter().enumerate() {
            let tokens = tokenize(&entry.text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, f) in tf {
                postings.entry(term).or_default().push((ord as u32, f));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        Ok(Self {
            postings,
            avg_doc_length: total as f64 / store.len() as f64,
            doc_lengths,
            ids: store.ids().map(str::to_string).collect(),
            params,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, ordinal: usize) -> u32 {
        self.doc_lengths[ordinal]
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.postings(term).len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Per-ordinal BM25 scores for the passages matching at least one query
    /// term. Repeated query terms contribute once per occurrence.
    pub fn score_all(&self, query: &str) -> HashMap<usize, f64> {
        let Bm25Params { k1, b } = self.params;
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in tokenize(query) {
            let postings = self.postings(&term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(&term);
            for &(ord, tf) in postings {
                let tf = tf as f64;
                let len = self.doc_lengths[ord as usize] as f64;
                let norm = k1 * (1.0 - b + b * len / self.avg_doc_length);
                *acc.entry(ord as usize).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        acc
    }

    pub fn search(&self, query_id: &str, query: &str, k: usize) -> Ranking {
        let scores = self.score_all(query);
        let hits = top_k(
            scores
                .into_iter()
                .filter(|&(_, s)| s > 0.0)
                .map(|(id, score)| Scored { id, score }),
            k,
        );
        Ranking::new(
            query_id,
            hits.into_iter().map(|h| (self.ids[h.id].clone(), h.score)).collect(),
        )
    }
}
