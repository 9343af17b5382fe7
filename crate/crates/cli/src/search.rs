use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use dualrep::bm25::SparseIndex;
use dualrep::corpus::write_run;
use dualrep::embed::{load_embeddings, EmbeddingMatrix};
use dualrep::flat::FlatIndex;
use dualrep::late::{MultiRetriever, MultiSearchParams};
use dualrep::{PassageStore, QuerySet, Ranking, Representation, Side, SyntheticEmbedder};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, EmbedderKind, IndexConfig, Mode};
use crate::usage;

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Directory written by `index`.
    #[arg(long)]
    pub index: PathBuf,
    /// Query file, `id<TAB>text` per line.
    #[arg(long)]
    pub queries: PathBuf,
    /// Run file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Retrieval depth.
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Approximate neighbours fetched per query embedding (multi).
    #[arg(long, default_value_t = 100)]
    pub k_per_emb: usize,
    /// Inverted lists probed per query embedding (multi).
    #[arg(long, default_value_t = 16)]
    pub nprobe: usize,
    /// Precomputed query embeddings keyed by query id.
    #[arg(long)]
    pub query_embeddings: Option<PathBuf>,
    /// Run tag [default: the index mode].
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Serialize)]
struct SearchConfig<'a> {
    index: String,
    index_config: &'a IndexConfig,
    queries: String,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    multi: Option<MultiSearchParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query_embeddings: Option<String>,
    tag: &'a str,
}

/// Query encoder for the dense modes.
pub enum QueryEncoder {
    Synthetic(SyntheticEmbedder),
    Precomputed(HashMap<String, EmbeddingMatrix>),
}

impl QueryEncoder {
    pub fn for_index(config: &IndexConfig, file: Option<&PathBuf>, want: Representation) -> Result<Self> {
        if let Some(path) = file {
            let f = load_embeddings(path)?;
            if f.representation != want {
                return Err(usage!(
                    "{} holds {:?} query embeddings, index needs {:?}",
                    path.display(),
                    f.representation,
                    want
                ));
            }
            return Ok(QueryEncoder::Precomputed(f.records.into_iter().collect()));
        }
        match (config.embedder, &config.embedder_config) {
            (Some(EmbedderKind::Synthetic), Some(cfg)) => {
                Ok(QueryEncoder::Synthetic(SyntheticEmbedder::new(cfg.clone())?))
            }
            _ => Err(usage!(
                "index was built from precomputed embeddings; pass --query-embeddings"
            )),
        }
    }

    pub fn encode(&self, id: &str, text: &str) -> Result<EmbeddingMatrix> {
        match self {
            QueryEncoder::Synthetic(e) => Ok(e.embed(text, Side::Query)),
            QueryEncoder::Precomputed(map) => map
                .get(id)
                .cloned()
                .ok_or_else(|| usage!("no query embedding for {id}")),
        }
    }
}

enum Engine {
    Sparse(SparseIndex),
    Flat(FlatIndex, QueryEncoder),
    Multi(MultiRetriever, QueryEncoder, MultiSearchParams),
}

impl Engine {
    fn search(&self, id: &str, text: &str, k: usize) -> Result<Ranking> {
        match self {
            Engine::Sparse(idx) => Ok(idx.search(id, text, k)),
            Engine::Flat(idx, enc) => {
                let q = enc.encode(id, text)?;
                if q.rows() != 1 {
                    return Err(usage!("query {id}: expected one embedding, got {}", q.rows()));
                }
                Ok(idx.search(id, q.row(0), k)?)
            }
            Engine::Multi(r, enc, params) => {
                let q = enc.encode(id, text)?;
                Ok(r.search(id, &q, k, *params)?)
            }
        }
    }
}

pub fn run(args: SearchArgs) -> Result<()> {
    if args.k == 0 {
        return Err(usage!("--k must be at least 1"));
    }
    let config = artifacts::read_index_config(&args.index)?;
    let queries = QuerySet::load(&args.queries)?;
    let tag = args.tag.clone().unwrap_or_else(|| config.mode.name().to_string());
    let mut multi_params = None;

    let engine = match config.mode {
        Mode::Bm25 => {
            let store = PassageStore::load(&args.index.join(artifacts::PASSAGES_FILE))?;
            Engine::Sparse(SparseIndex::build(&store, config.bm25.unwrap_or_default())?)
        }
        Mode::Single => {
            let flat = FlatIndex::from_embeddings(&load_embeddings(&args.index.join(artifacts::SINGLE_FILE))?)?;
            let enc = QueryEncoder::for_index(&config, args.query_embeddings.as_ref(), Representation::Single)?;
            Engine::Flat(flat, enc)
        }
        Mode::Multi => {
            let r = MultiRetriever::load(&args.index)?;
            let enc = QueryEncoder::for_index(&config, args.query_embeddings.as_ref(), Representation::Multi)?;
            if args.k_per_emb == 0 || args.nprobe == 0 {
                return Err(usage!("--k-per-emb and --nprobe must be at least 1"));
            }
            if args.nprobe > r.index.nlist() {
                return Err(usage!("--nprobe {} exceeds nlist {}", args.nprobe, r.index.nlist()));
            }
            let params = MultiSearchParams {
                k_per_emb: args.k_per_emb,
                nprobe: args.nprobe,
            };
            multi_params = Some(params);
            Engine::Multi(r, enc, params)
        }
    };

    let results: Vec<(Ranking, f64)> = queries
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| {
            let start = Instant::now();
            let ranking = engine.search(&q.id, &q.text, args.k)?;
            Ok((ranking, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;

    let mut times: Vec<f64> = results.iter().map(|r| r.1).collect();
    let rankings: Vec<Ranking> = results.into_iter().map(|r| r.0).collect();
    for r in rankings.iter().filter(|r| r.is_empty()) {
        warn!("query {} retrieved nothing", r.query_id);
    }
    write_run(&rankings, &tag, &args.out)?;
    artifacts::write_json(
        &artifacts::sidecar_config(&args.out),
        &SearchConfig {
            index: args.index.display().to_string(),
            index_config: &config,
            queries: args.queries.display().to_string(),
            k: args.k,
            multi: multi_params,
            query_embeddings: args.query_embeddings.as_ref().map(|p| p.display().to_string()),
            tag: &tag,
        },
    )?;

    if !times.is_empty() {
        times.sort_by(f64::total_cmp);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let p95 = times[((times.len() as f64 * 0.95).ceil() as usize).clamp(1, times.len()) - 1];
        info!(
            "{} queries, response time mean {mean:.3} ms, p95 {p95:.3} ms",
            times.len()
        );
    }
    Ok(())
}
