//! Browser demo. Each exported function takes plain strings/numbers and
//! returns a JSON string for `www/index.js` to draw.
//!
//! The work is done in ordinary Rust functions (`*_report`) so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers only serialise.

use dualrep::flat::FlatIndex;
use dualrep::ivfpq::{measure_recall, IvfPqIndex, IvfPqParams, Recall, TokenRef};
use dualrep::late::{explain_interaction, maxsim_score, InteractionReport};
use dualrep::synth::clustered_vectors;
use dualrep::{EmbedderConfig, Side, SyntheticEmbedder};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn multi_embedder(seed: u64) -> dualrep::Result<SyntheticEmbedder> {
    SyntheticEmbedder::new(EmbedderConfig::multi().with_seed(seed))
}

/// Query-by-passage similarity matrix, with padding rows dropped so the
/// heatmap only shows real query tokens.
pub fn interaction_report(query: &str, passage: &str, seed: u64) -> dualrep::Result<InteractionReport> {
    let embedder = multi_embedder(seed)?;
    let q = embedder.embed(query, Side::Query);
    let d = embedder.embed(passage, Side::Passage);
    let mut report = explain_interaction(
        &q,
        &d,
        &embedder.row_labels(query, Side::Query),
        &embedder.row_labels(passage, Side::Passage),
    )?;
    let real = report.query_tokens.iter().take_while(|t| *t != "[pad]").count();
    report.query_tokens.truncate(real);
    report.matrix.truncate(real);
    report.argmax.truncate(real);
    report.contributions.truncate(real);
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Scores {
    pub a: f64,
    pub b: f64,
    /// (a − b) divided by the best score the query can reach
    pub normalised_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AspectReport {
    pub multi: Scores,
    pub single: Scores,
}

/// Scores two passages against one query under both representations.
/// Multi-representation scores are normalised by the query's max-sim with
/// itself, single-representation ones need none (unit vectors).
pub fn aspect_report(query: &str, passage_a: &str, passage_b: &str, seed: u64) -> dualrep::Result<AspectReport> {
    let multi = multi_embedder(seed)?;
    let q = multi.embed(query, Side::Query);
    let best = maxsim_score(&q, &q)?;
    let ma = maxsim_score(&q, &multi.embed(passage_a, Side::Passage))?;
    let mb = maxsim_score(&q, &multi.embed(passage_b, Side::Passage))?;

    let single = SyntheticEmbedder::new(EmbedderConfig::single().with_seed(seed))?;
    let rows = vec![
        single.embed(passage_a, Side::Passage).row(0).to_vec(),
        single.embed(passage_b, Side::Passage).row(0).to_vec(),
    ];
    let flat = FlatIndex::build(&rows, vec!["a".into(), "b".into()])?;
    let hits = flat.search_ordinals(single.embed(query, Side::Query).row(0), 2)?;
    let score = |id: usize| hits.iter().find(|s| s.id == id).map_or(0.0, |s| s.score);
    let (sa, sb) = (score(0), score(1));

    Ok(AspectReport {
        multi: Scores {
            a: ma,
            b: mb,
            normalised_gap: if best > 0.0 { (ma - mb) / best } else { 0.0 },
        },
        single: Scores {
            a: sa,
            b: sb,
            normalised_gap: sa - sb,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecallCurve {
    pub n: usize,
    pub dim: usize,
    pub nlist: usize,
    pub m: usize,
    pub ks: usize,
    pub points: Vec<Recall>,
}

/// Recall@10 of an IVFPQ index over clustered synthetic vectors for nprobe
/// = 1, 2, 4, … up to nlist.
pub fn recall_curve_report(n: usize, clusters: usize, nlist: usize, seed: u64) -> dualrep::Result<RecallCurve> {
    const DIM: usize = 64;
    if !(100..=20_000).contains(&n) || clusters == 0 {
        return Err(dualrep::Error::InvalidParameter(format!(
            "need 100..=20000 vectors and at least one cluster, got n={n}, clusters={clusters}"
        )));
    }
    let base = clustered_vectors(n, DIM, clusters, 0.05, seed);
    let queries = clustered_vectors(100, DIM, clusters, 0.05, seed.wrapping_add(1));
    let tokens = (0..n as u32).map(|passage| TokenRef { passage, token: 0 }).collect();
    let params = IvfPqParams {
        nlist: Some(nlist),
        m: Some(8),
        seed,
        ..IvfPqParams::default()
    };
    let (index, resolved) = IvfPqIndex::build(&base, DIM, tokens, &params)?;
    let mut points = Vec::new();
    let mut nprobe = 1;
    loop {
        let nprobe_now = nprobe.min(resolved.nlist);
        points.push(measure_recall(&index, &base, &queries, 10, nprobe_now)?);
        if nprobe_now == resolved.nlist {
            break;
        }
        nprobe *= 2;
    }
    Ok(RecallCurve {
        n,
        dim: DIM,
        nlist: resolved.nlist,
        m: resolved.m,
        ks: resolved.ks,
        points,
    })
}

fn to_json<T: Serialize>(r: dualrep::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn explain(query: &str, passage: &str, seed: u32) -> Result<String, JsError> {
    to_json(interaction_report(query, passage, seed as u64))
}

#[wasm_bindgen]
pub fn compare_aspects(query: &str, passage_a: &str, passage_b: &str, seed: u32) -> Result<String, JsError> {
    to_json(aspect_report(query, passage_a, passage_b, seed as u64))
}

#[wasm_bindgen]
pub fn recall_curve(n: u32, clusters: u32, nlist: u32, seed: u32) -> Result<String, JsError> {
    to_json(recall_curve_report(
        n as usize,
        clusters as usize,
        nlist as usize,
        seed as u64,
    ))
}
