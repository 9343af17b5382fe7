//! Product quantization of residual vectors.

use crate::error::{Error, Result};
use crate::ivfpq::kmeans::{train_kmeans, Centroids};
use crate::vector;

/// `m` sub-codebooks of `ks` codewords, each `dim / m` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    pub dim: usize,
    pub m: usize,
    pub ks: usize,
    /// `m x ks x dsub`, row-major
    pub codewords: Vec<f32>,
}

impl PqCodebook {
    pub fn from_parts(dim: usize, m: usize, ks: usize, codewords: Vec<f32>) -> Result<Self> {
        check_shape(dim, m, ks)?;
        if codewords.len() != dim * ks {
            return Err(Error::InvalidData(format!(
                "{} codeword values for m={m} ks={ks} dim={dim}",
                codewords.len()
            )));
        }
        Ok(Self { dim, m, ks, codewords })
    }

    pub fn dsub(&self) -> usize {
        self.dim / self.m
    }

    pub fn codeword(&self, sub: usize, word: usize) -> &[f32] {
        let dsub = self.dsub();
        let start = (sub * self.ks + word) * dsub;
        &self.codewords[start..start + dsub]
    }

    fn subspace(&self, sub: usize) -> &[f32] {
        let len = self.ks * self.dsub();
        &self.codewords[sub * len..(sub + 1) * len]
    }

    /// Nearest codeword per subspace.
    pub fn encode(&self, residual: &[f32]) -> Vec<u8> {
        let dsub = self.dsub();
        residual
            .chunks_exact(dsub)
            .enumerate()
            .map(|(j, sub)| vector::nearest_l2(self.subspace(j), dsub, sub).0 as u8)
            .collect()
    }

    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        code.iter()
            .enumerate()
            .flat_map(|(j, &w)| self.codeword(j, w as usize).iter().copied())
            .collect()
    }

    /// Inner products of each query subvector with every codeword, `m x ks`.
    pub fn inner_product_table(&self, q: &[f32]) -> Vec<f64> {
        let dsub = self.dsub();
        let mut lut = Vec::with_capacity(self.m * self.ks);
        for (j, qs) in q.chunks_exact(dsub).enumerate() {
            lut.extend(self.subspace(j).chunks_exact(dsub).map(|cw| vector::dot(qs, cw)));
        }
        lut
    }
}

fn check_shape(dim: usize, m: usize, ks: usize) -> Result<()> {
    if m == 0 || dim == 0 || !dim.is_multiple_of(m) {
        return Err(Error::InvalidParameter(format!("m must divide dim (m={m}, dim={dim})")));
    }
    if !(1..=256).contains(&ks) {
        return Err(Error::InvalidParameter(format!("ks must be in 1..=256, got {ks}")));
    }
    Ok(())
}

/// Trains one k-means codebook per subspace of the row-major `residuals`.
/// Subspace `j` uses seed `seed + j`.
pub fn train_pq(residuals: &[f32], dim: usize, m: usize, ks: usize, iters: usize, seed: u64) -> Result<PqCodebook> {
    check_shape(dim, m, ks)?;
    if !residuals.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!(
            "{} values do not form {dim}-dim rows",
            residuals.len()
        )));
    }
    let n = residuals.len() / dim;
    if n < ks {
        return Err(Error::InvalidParameter(format!(
            "PQ training needs at least ks={ks} vectors, got {n}"
        )));
    }
    let dsub = dim / m;
    let mut codewords = Vec::with_capacity(m * ks * dsub);
    for j in 0..m {
        let sub: Vec<f32> = residuals
            .chunks_exact(dim)
            .flat_map(|r| r[j * dsub..(j + 1) * dsub].iter().copied())
            .collect();
        let Centroids { values, .. } = train_kmeans(&sub, dsub, ks, iters, seed.wrapping_add(j as u64))?;
        codewords.extend(values);
    }
    PqCodebook::from_parts(dim, m, ks, codewords)
}
