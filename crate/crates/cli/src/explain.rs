use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use dualrep::late::{explain_interaction, MultiRetriever};
use dualrep::{tokenize, PassageStore, Representation, Side};

use crate::artifacts::{self, Mode};
use crate::search::QueryEncoder;
use crate::usage;

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Multi-representation index directory.
    #[arg(long)]
    pub index: PathBuf,
    /// Query text.
    #[arg(long)]
    pub query: String,
    /// Query id, used to look up `--query-embeddings`.
    #[arg(long, default_value = "q")]
    pub query_id: String,
    #[arg(long)]
    pub query_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub passage_id: String,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn labels_or_positions(tokens: Vec<String>, rows: usize, prefix: &str) -> Vec<String> {
    if tokens.len() == rows {
        tokens
    } else {
        (0..rows).map(|i| format!("{prefix}{i}")).collect()
    }
}

pub fn run(args: ExplainArgs) -> Result<()> {
    let config = artifacts::read_index_config(&args.index)?;
    if config.mode != Mode::Multi {
        return Err(usage!("explain needs a multi-representation index"));
    }
    let retriever = MultiRetriever::load(&args.index)?;
    let passages = PassageStore::load(&args.index.join(artifacts::PASSAGES_FILE))?;
    let ordinal = retriever
        .ids
        .iter()
        .position(|id| *id == args.passage_id)
        .ok_or_else(|| dualrep::Error::UnknownId(args.passage_id.clone()))?;
    let encoder = QueryEncoder::for_index(&config, args.query_embeddings.as_ref(), Representation::Multi)?;
    let q = encoder.encode(&args.query_id, &args.query)?;
    let d = retriever.store.matrix(ordinal).expect("ordinal from id list");

    let (q_labels, d_labels) = match &encoder {
        QueryEncoder::Synthetic(e) => {
            let text = passages
                .ordinal(&args.passage_id)
                .map(|o| passages.text(o))
                .unwrap_or("");
            (
                e.row_labels(&args.query, Side::Query),
                e.row_labels(text, Side::Passage),
            )
        }
        QueryEncoder::Precomputed(_) => {
            let text = passages
                .ordinal(&args.passage_id)
                .map(|o| passages.text(o))
                .unwrap_or("");
            (
                labels_or_positions(tokenize(&args.query), q.rows(), "q"),
                labels_or_positions(tokenize(text), d.rows(), "d"),
            )
        }
    };
    let q_labels = labels_or_positions(q_labels, q.rows(), "q");
    let d_labels = labels_or_positions(d_labels, d.rows(), "d");
    let report = explain_interaction(&q, &d, &q_labels, &d_labels)?;

    match &args.out {
        Some(path) => artifacts::write_json(path, &report)?,
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
