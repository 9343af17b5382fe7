//! Inverted-file index with residual PQ codes and inner-product ADC search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::ivfpq::kmeans::{train_kmeans, Centroids};
use crate::ivfpq::pq::{train_pq, PqCodebook};
use crate::topk::{top_k, Scored};
use crate::vector;

/// Where an indexed token embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRef {
    pub passage: u32,
    pub token: u32,
}

/// Build parameters; `None` fields are derived from the data size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfPqParams {
    pub nlist: Option<usize>,
    pub m: Option<usize>,
    pub ks: Option<usize>,
    pub sample_rate: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for IvfPqParams {
    fn default() -> Self {
        Self {
            nlist: None,
            m: None,
            ks: None,
            sample_rate: 0.05,
            iters: 20,
            seed: 0,
        }
    }
}

/// Concrete values used for one build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub nlist: usize,
    pub m: usize,
    pub ks: usize,
    pub sample_size: usize,
    pub iters: usize,
    pub seed: u64,
}

pub fn default_nlist(n: usize) -> usize {
    (4 * (n as f64).sqrt().ceil() as usize).clamp(1, 4096)
}

pub fn default_m(dim: usize) -> usize {
    let target = (dim / 8).max(1);
    (1..=target).rev().find(|m| dim.is_multiple_of(*m)).unwrap_or(1)
}

impl IvfPqParams {
    pub fn resolve(&self, n: usize, dim: usize) -> Result<ResolvedParams> {
        if n == 0 {
            return Err(Error::InvalidData("no vectors to index".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be in (0, 1], got {}",
                self.sample_rate
            )));
        }
        let m = self.m.unwrap_or_else(|| default_m(dim));
        if m == 0 || !dim.is_multiple_of(m) {
            return Err(Error::InvalidParameter(format!("m must divide dim (m={m}, dim={dim})")));
        }
        let nlist_guess = self.nlist.unwrap_or_else(|| default_nlist(n));
        let ks_guess = self.ks.unwrap_or(256);
        let floor = (10 * nlist_guess).max(50 * ks_guess);
        let sample_size = ((self.sample_rate * n as f64).ceil() as usize).max(floor).min(n);
        let nlist = match self.nlist {
            Some(v) => v,
            None => nlist_guess.min(sample_size),
        };
        let ks = match self.ks {
            Some(v) => v,
            None => ks_guess.min(sample_size),
        };
        if nlist == 0 || nlist > sample_size {
            return Err(Error::InvalidParameter(format!(
                "nlist={nlist} must be in 1..={sample_size} (training sample size)"
            )));
        }
        if !(1..=256).contains(&ks) || ks > sample_size {
            return Err(Error::InvalidParameter(format!(
                "ks={ks} must be in 1..=256 and at most the training sample size {sample_size}"
            )));
        }
        Ok(ResolvedParams {
            nlist,
            m,
            ks,
            sample_size,
            iters: self.iters,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedList {
    pub token_ids: Vec<u32>,
    /// `m` bytes per entry
    pub codes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfPqIndex {
    dim: usize,
    centroids: Centroids,
    codebook: PqCodebook,
    lists: Vec<InvertedList>,
    tokens: Vec<TokenRef>,
}

/// Coarse assignment and PQ code of `v`.
pub fn pq_encode(codebook: &PqCodebook, centroids: &Centroids, v: &[f32]) -> (usize, Vec<u8>) {
    let (list, _) = centroids.assign(v);
    let residual: Vec<f32> = v.iter().zip(centroids.row(list)).map(|(a, c)| a - c).collect();
    (list, codebook.encode(&residual))
}

pub fn pq_decode(codebook: &PqCodebook, centroids: &Centroids, list: usize, code: &[u8]) -> Vec<f32> {
    centroids
        .row(list)
        .iter()
        .zip(codebook.decode(code))
        .map(|(c, r)| c + r)
        .collect()
}

impl IvfPqIndex {
    /// Trains the coarse quantizer and PQ codebook on a seeded sample of
    /// `vectors` and encodes every vector. `tokens[i]` describes row `i`.
    pub fn build(
        vectors: &[f32],
        dim: usize,
        tokens: Vec<TokenRef>,
        params: &IvfPqParams,
    ) -> Result<(Self, ResolvedParams)> {
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::InvalidData(format!(
                "{} values do not form {dim}-dim rows",
                vectors.len()
            )));
        }
        let n = vectors.len() / dim;
        if tokens.len() != n {
            return Err(Error::InvalidData(format!(
                "{} token refs for {n} vectors",
                tokens.len()
            )));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidData("too many vectors for u32 token ids".into()));
        }
        let resolved = params.resolve(n, dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, resolved.sample_size).into_vec();
        picked.sort_unstable();
        let sample: Vec<f32> = picked
            .iter()
            .flat_map(|&i| vectors[i * dim..(i + 1) * dim].iter().copied())
            .collect();

        let centroids = train_kmeans(&sample, dim, resolved.nlist, resolved.iters, resolved.seed)?;
        let residuals: Vec<f32> = sample
            .chunks_exact(dim)
            .flat_map(|v| {
                let (list, _) = centroids.assign(v);
                v.iter()
                    .zip(centroids.row(list))
                    .map(|(a, c)| a - c)
                    .collect::<Vec<_>>()
            })
            .collect();
        let codebook = train_pq(
            &residuals,
            dim,
            resolved.m,
            resolved.ks,
            resolved.iters,
            resolved.seed.wrapping_add(1),
        )?;

        let mut lists = vec![
            InvertedList {
                token_ids: Vec::new(),
                codes: Vec::new()
            };
            resolved.nlist
        ];
        for (i, v) in vectors.chunks_exact(dim).enumerate() {
            let (list, code) = pq_encode(&codebook, &centroids, v);
            lists[list].token_ids.push(i as u32);
            lists[list].codes.extend(code);
        }
        Ok((
            Self {
                dim,
                centroids,
                codebook,
                lists,
                tokens,
            },
            resolved,
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn codebook(&self) -> &PqCodebook {
        &self.codebook
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    pub fn token(&self, id: usize) -> TokenRef {
        self.tokens[id]
    }

    /// Reconstruction of token `id` from its list centroid and code.
    pub fn reconstruct(&self, id: usize) -> Option<Vec<f32>> {
        let m = self.codebook.m;
        self.lists.iter().enumerate().find_map(|(l, list)| {
            list.token_ids
                .iter()
                .position(|&t| t as usize == id)
                .map(|p| pq_decode(&self.codebook, &self.centroids, l, &list.codes[p * m..(p + 1) * m]))
        })
    }

    /// Lists to scan: the `nprobe` centroids with the largest inner product
    /// with `q`, ties to the lower list id.
    pub fn probe_lists(&self, q: &[f32], nprobe: usize) -> Vec<Scored> {
        top_k(
            (0..self.nlist()).map(|l| Scored {
                id: l,
                score: vector::dot(q, self.centroids.row(l)),
            }),
            nprobe,
        )
    }

    /// Approximate top-`k` token ids by inner product.
    pub fn search(&self, q: &[f32], k: usize, nprobe: usize) -> Result<Vec<Scored>> {
        if q.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(Error::InvalidParameter(format!(
                "nprobe={nprobe} must be in 1..={}",
                self.nlist()
            )));
        }
        let m = self.codebook.m;
        let ks = self.codebook.ks;
        let lut = self.codebook.inner_product_table(q);
        let probed = self.probe_lists(q, nprobe);
        let hits = probed.iter().flat_map(|p| {
            let list = &self.lists[p.id];
            let base = p.score;
            let lut = &lut;
            list.token_ids
                .iter()
                .zip(list.codes.chunks_exact(m))
                .map(move |(&tid, code)| {
                    let adc: f64 = code.iter().enumerate().map(|(j, &w)| lut[j * ks + w as usize]).sum();
                    Scored {
                        id: tid as usize,
                        score: base + adc,
                    }
                })
        });
        Ok(top_k(hits, k))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        binio::put_u32(&mut out, VERSION);
        for v in [self.dim, self.codebook.m, self.codebook.ks, self.nlist()] {
            binio::put_len(&mut out, v)?;
        }
        binio::put_f32s(&mut out, &self.centroids.values);
        binio::put_f32s(&mut out, &self.codebook.codewords);
        for list in &self.lists {
            binio::put_len(&mut out, list.token_ids.len())?;
            for (tid, code) in list.token_ids.iter().zip(list.codes.chunks_exact(self.codebook.m)) {
                binio::put_u32(&mut out, *tid);
                out.extend_from_slice(code);
            }
        }
        binio::put_len(&mut out, self.tokens.len())?;
        for t in &self.tokens {
            binio::put_u32(&mut out, t.passage);
            binio::put_u32(&mut out, t.token);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, "IVFPQ index");
        r.magic(&[MAGIC])?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "IVFPQ index: version {version}, expected {VERSION}"
            )));
        }
        let dim = r.len_u32()?;
        let m = r.len_u32()?;
        let ks = r.len_u32()?;
        let nlist = r.len_u32()?;
        let centroids = Centroids::from_values(nlist, dim, r.f32s(nlist * dim)?)?;
        let codebook = PqCodebook::from_parts(dim, m, ks, r.f32s(dim * ks)?)?;
        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = r.len_u32()?;
            let mut token_ids = Vec::with_capacity(len);
            let mut codes = Vec::with_capacity(len * m);
            for _ in 0..len {
                token_ids.push(r.u32()?);
                let code = r.take(m)?;
                if code.iter().any(|&c| c as usize >= ks) {
                    return Err(Error::Format("IVFPQ index: code out of range".into()));
                }
                codes.extend_from_slice(code);
            }
            lists.push(InvertedList { token_ids, codes });
        }
        let n = r.len_u32()?;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            tokens.push(TokenRef {
                passage: r.u32()?,
                token: r.u32()?,
            });
        }
        r.finish()?;
        let listed: usize = lists.iter().map(|l| l.token_ids.len()).sum();
        if listed != n || lists.iter().flat_map(|l| &l.token_ids).any(|&t| t as usize >= n) {
            return Err(Error::Format(
                "IVFPQ index: inverted lists do not cover the token map".into(),
            ));
        }
        Ok(Self {
            dim,
            centroids,
            codebook,
            lists,
            tokens,
        })
    }
}

const MAGIC: &[u8; 4] = b"IVPQ";
const VERSION: u32 = 1;
