//! Per-query effectiveness metrics over graded judgments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Qrels, Ranking};
use crate::error::{Error, Result};

type Judgments = BTreeMap<String, u32>;

/// NDCG with linear gains (`grade / log2(rank + 1)`). `None` when the query
/// has no positive judgment.
pub fn ndcg_at(ranking: &Ranking, judgments: &Judgments, cutoff: usize) -> Option<f64> {
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let discount = |rank: usize| ((rank + 1) as f64).log2();
    let dcg: f64 = ranking
        .passage_ids()
        .take(cutoff)
        .enumerate()
        .map(|(i, pid)| judgments.get(pid).copied().unwrap_or(0) as f64 / discount(i + 1))
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| g as f64 / discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

fn relevant_set(judgments: &Judgments, binarize_at: u32) -> HashSet<&str> {
    judgments
        .iter()
        .filter(|(_, &g)| g >= binarize_at && g > 0)
        .map(|(p, _)| p.as_str())
        .collect()
}

/// Average precision over the first `depth` results; relevant passages
/// never retrieved contribute zero.
pub fn average_precision(ranking: &Ranking, judgments: &Judgments, binarize_at: u32, depth: usize) -> Option<f64> {
    let relevant = relevant_set(judgments, binarize_at);
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, pid) in ranking.passage_ids().take(depth).enumerate() {
        if relevant.contains(pid) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Reciprocal rank of the first relevant passage within `cutoff`.
pub fn rr_at(ranking: &Ranking, judgments: &Judgments, cutoff: usize, binarize_at: u32) -> Option<f64> {
    let relevant = relevant_set(judgments, binarize_at);
    if relevant.is_empty() {
        return None;
    }
    Some(
        ranking
            .passage_ids()
            .take(cutoff)
            .position(|pid| relevant.contains(pid))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Map,
    Ndcg(usize),
    Mrr(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Map => write!(f, "map"),
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Mrr(k) => write!(f, "mrr@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let cutoff = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::InvalidParameter(format!("bad metric cutoff in {s:?}")))
        };
        match lower.split_once('@') {
            None if lower == "map" || lower == "ap" => Ok(Metric::Map),
            Some(("ndcg", rest)) => Ok(Metric::Ndcg(cutoff(rest)?)),
            Some(("mrr", rest)) | Some(("rr", rest)) => Ok(Metric::Mrr(cutoff(rest)?)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown metric {s:?} (expected map, ndcg@K or mrr@K)"
            ))),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Minimum grade counted as relevant for MAP and MRR.
    pub binarize_at: u32,
    /// Ranking depth consumed by MAP.
    pub depth: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            binarize_at: 1,
            depth: 1000,
        }
    }
}

impl Metric {
    pub fn evaluate(&self, ranking: &Ranking, judgments: &Judgments, config: &EvalConfig) -> Option<f64> {
        match *self {
            Metric::Map => average_precision(ranking, judgments, config.binarize_at, config.depth),
            Metric::Ndcg(k) => ndcg_at(ranking, judgments, k),
            Metric::Mrr(k) => rr_at(ranking, judgments, k, config.binarize_at),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Queries seen in the run or the judgments but lacking positive judgments.
    pub excluded: Vec<String>,
}

/// Scores every judged query. Judged queries absent from the run count as
/// empty rankings.
pub fn evaluate(rankings: &[Ranking], qrels: &Qrels, metric: Metric, config: &EvalConfig) -> MetricResult {
    let by_query: HashMap<&str, &Ranking> = rankings.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    let empty = BTreeMap::new();
    let mut all: Vec<&str> = qrels.query_ids().chain(by_query.keys().copied()).collect();
    all.sort_unstable();
    all.dedup();
    for qid in all {
        let judgments = qrels.judgments(qid).unwrap_or(&empty);
        let ranking = by_query
            .get(qid)
            .map(|r| (*r).clone())
            .unwrap_or_else(|| Ranking::new(qid, Vec::new()));
        match metric.evaluate(&ranking, judgments, config) {
            Some(v) => {
                per_query.insert(qid.to_string(), v);
            }
            None => excluded.push(qid.to_string()),
        }
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    MetricResult {
        metric,
        per_query,
        mean,
        excluded,
    }
}
