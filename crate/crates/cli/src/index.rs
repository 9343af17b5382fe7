use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use dualrep::bm25::{Bm25Params, SparseIndex};
use dualrep::embed::{load_embeddings, write_embeddings, EmbeddingFile, EmbeddingMatrix};
use dualrep::flat::FlatIndex;
use dualrep::ivfpq::IvfPqParams;
use dualrep::late::{MultiRetriever, TokenStore};
use dualrep::{EmbedderConfig, PassageStore, Representation, Side, SyntheticEmbedder};
use log::info;

use crate::artifacts::{self, EmbedderKind, IndexConfig, Mode};
use crate::usage;

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Passage file, `id<TAB>text` per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "synthetic")]
    pub embedder: EmbedderKind,
    /// DVE1/MVE1 file with one record per corpus passage (with `--embedder file`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding width for the synthetic embedder [default: 768 single, 128 multi].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Query embeddings per query (multi).
    #[arg(long, default_value_t = 32)]
    pub q_len: usize,
    /// Maximum embeddings per passage (multi).
    #[arg(long, default_value_t = 180)]
    pub max_doc_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inverted lists [default: 4*ceil(sqrt(tokens)), at most 4096].
    #[arg(long)]
    pub nlist: Option<usize>,
    /// PQ subspaces; must divide dim [default: dim/8].
    #[arg(long)]
    pub pq_m: Option<usize>,
    /// Codewords per subspace, at most 256 [default: 256].
    #[arg(long)]
    pub pq_ks: Option<usize>,
    /// Fraction of token embeddings used to train the quantizers.
    #[arg(long, default_value_t = 0.05)]
    pub sample_rate: f64,
    /// Lloyd iterations for coarse and PQ training.
    #[arg(long, default_value_t = 20)]
    pub kmeans_iters: usize,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

fn embedder_config(args: &IndexArgs, mode: Representation) -> EmbedderConfig {
    let base = match mode {
        Representation::Single => EmbedderConfig::single(),
        Representation::Multi => EmbedderConfig {
            q_len: args.q_len,
            max_doc_tokens: args.max_doc_tokens,
            ..EmbedderConfig::multi()
        },
    };
    let dim = args.dim.unwrap_or(base.dim);
    base.with_dim(dim).with_seed(args.seed)
}

/// Loads precomputed embeddings and orders them like the corpus.
fn file_embeddings(args: &IndexArgs, store: &PassageStore, want: Representation) -> Result<EmbeddingFile> {
    let path = args
        .embeddings
        .as_ref()
        .ok_or_else(|| usage!("--embedder file needs --embeddings"))?;
    let file = load_embeddings(path)?;
    if file.representation != want {
        return Err(usage!(
            "{} holds {:?} embeddings, index mode needs {:?}",
            path.display(),
            file.representation,
            want
        ));
    }
    let mut by_id: HashMap<String, EmbeddingMatrix> = file.records.into_iter().collect();
    let mut ids = Vec::with_capacity(store.len());
    let mut mats = Vec::with_capacity(store.len());
    for id in store.ids() {
        let m = by_id
            .remove(id)
            .ok_or_else(|| usage!("{} has no embedding for passage {id}", path.display()))?;
        ids.push(id.to_string());
        mats.push(m);
    }
    Ok(EmbeddingFile::new(want, ids, mats)?)
}

pub fn run(args: IndexArgs) -> Result<()> {
    let store = PassageStore::load(&args.corpus)?;
    if store.is_empty() {
        return Err(usage!("{} contains no passages", args.corpus.display()));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut config = IndexConfig {
        mode: args.mode,
        corpus: args.corpus.display().to_string(),
        num_passages: store.len(),
        bm25: None,
        embedder: None,
        embeddings: None,
        embedder_config: None,
        ivfpq_requested: None,
        ivfpq: None,
    };

    match args.mode {
        Mode::Bm25 => {
            let params = Bm25Params { k1: args.k1, b: args.b };
            let index = SparseIndex::build(&store, params)?;
            info!(
                "bm25: {} passages, avg length {:.2}",
                index.num_docs(),
                index.avg_doc_length()
            );
            config.bm25 = Some(params);
        }
        Mode::Single => {
            let file = match args.embedder {
                EmbedderKind::Synthetic => {
                    let cfg = embedder_config(&args, Representation::Single);
                    let embedder = SyntheticEmbedder::new(cfg.clone())?;
                    config.embedder_config = Some(cfg);
                    let mats = store.iter().map(|p| embedder.embed_single(&p.text)).collect();
                    EmbeddingFile::new(Representation::Single, store.ids().map(str::to_string).collect(), mats)?
                }
                EmbedderKind::File => file_embeddings(&args, &store, Representation::Single)?,
            };
            let flat = FlatIndex::from_embeddings(&file)?;
            write_embeddings(&flat.to_embeddings(), &args.out.join(artifacts::SINGLE_FILE))?;
            info!("single: {} vectors of dim {}", flat.len(), flat.dim());
        }
        Mode::Multi => {
            let file = match args.embedder {
                EmbedderKind::Synthetic => {
                    let cfg = embedder_config(&args, Representation::Multi);
                    let embedder = SyntheticEmbedder::new(cfg.clone())?;
                    config.embedder_config = Some(cfg);
                    let mats = store
                        .iter()
                        .map(|p| embedder.embed_multi(&p.text, Side::Passage))
                        .collect();
                    EmbeddingFile::new(Representation::Multi, store.ids().map(str::to_string).collect(), mats)?
                }
                EmbedderKind::File => file_embeddings(&args, &store, Representation::Multi)?,
            };
            let token_store = TokenStore::from_embeddings(&file)?;
            let params = IvfPqParams {
                nlist: args.nlist,
                m: args.pq_m,
                ks: args.pq_ks,
                sample_rate: args.sample_rate,
                iters: args.kmeans_iters,
                seed: args.seed,
            };
            let ids = file.records.into_iter().map(|(id, _)| id).collect();
            let (retriever, resolved) = MultiRetriever::build(token_store, ids, &params)?;
            info!(
                "multi: {} token embeddings, nlist={} m={} ks={} trained on {}",
                retriever.store.num_tokens(),
                resolved.nlist,
                resolved.m,
                resolved.ks,
                resolved.sample_size
            );
            retriever.save(&args.out)?;
            config.ivfpq_requested = Some(params);
            config.ivfpq = Some(resolved);
        }
    }
    if args.mode != Mode::Bm25 {
        config.embedder = Some(args.embedder);
        config.embeddings = args.embeddings.as_ref().map(|p| p.display().to_string());
    }

    let passages = args.out.join(artifacts::PASSAGES_FILE);
    fs::write(&passages, store.to_tsv()).with_context(|| format!("writing {}", passages.display()))?;
    artifacts::write_json(&args.out.join(artifacts::CONFIG_FILE), &config)?;
    Ok(())
}
