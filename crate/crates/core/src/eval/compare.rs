//! System-versus-baseline comparison: difficulty classes, wins and losses
//! with reward and risk, per-query deltas and the combined report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Qrels, Ranking};
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate, EvalConfig, Metric};
use crate::eval::stats::{bonferroni, is_significant, paired_t_test};

pub type PerQuery = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyPartition {
    pub classes: BTreeMap<String, Difficulty>,
    pub counts: BTreeMap<Difficulty, usize>,
}

impl DifficultyPartition {
    fn from_classes(classes: BTreeMap<String, Difficulty>) -> Self {
        let mut counts = BTreeMap::new();
        for c in classes.values() {
            *counts.entry(*c).or_insert(0) += 1;
        }
        Self { classes, counts }
    }

    pub fn count(&self, class: Difficulty) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }
}

/// Hard = lowest ⌈n/4⌉ baseline scores, Easy = highest ⌈n/4⌉, Medium = the
/// rest. Equal scores are ordered by query id.
pub fn classify_quartile(baseline: &PerQuery) -> Result<DifficultyPartition> {
    let n = baseline.len();
    if n < 4 {
        return Err(Error::InvalidData(format!(
            "quartile classification needs at least 4 queries, got {n}"
        )));
    }
    let mut order: Vec<(&String, f64)> = baseline.iter().map(|(q, &s)| (q, s)).collect();
    // BTreeMap iteration is already id-ordered, so a stable sort keeps the tie rule
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    let quarter = n.div_ceil(4);
    let classes = order
        .into_iter()
        .enumerate()
        .map(|(i, (q, _))| {
            let c = if i < quarter {
                Difficulty::Hard
            } else if i >= n - quarter {
                Difficulty::Easy
            } else {
                Difficulty::Medium
            };
            (q.clone(), c)
        })
        .collect();
    Ok(DifficultyPartition::from_classes(classes))
}

/// Hard iff the baseline score is at most `threshold`, else Easy.
pub fn classify_threshold(baseline: &PerQuery, threshold: f64) -> DifficultyPartition {
    let classes = baseline
        .iter()
        .map(|(q, &s)| {
            let c = if s <= threshold {
                Difficulty::Hard
            } else {
                Difficulty::Easy
            };
            (q.clone(), c)
        })
        .collect();
    DifficultyPartition::from_classes(classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DifficultyMode {
    Quartile,
    Threshold { threshold: f64 },
}

impl FromStr for DifficultyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "quartile" => Ok(DifficultyMode::Quartile),
            None if s == "threshold" => Ok(DifficultyMode::Threshold { threshold: 0.1 }),
            Some(("threshold", t)) => t
                .parse()
                .ok()
                .filter(|t: &f64| t.is_finite())
                .map(|threshold| DifficultyMode::Threshold { threshold })
                .ok_or_else(|| Error::InvalidParameter(format!("bad threshold in {s:?}"))),
            _ => Err(Error::InvalidParameter(format!(
                "unknown difficulty mode {s:?} (expected quartile or threshold:T)"
            ))),
        }
    }
}

impl DifficultyMode {
    pub fn classify(&self, baseline: &PerQuery) -> Result<DifficultyPartition> {
        match *self {
            DifficultyMode::Quartile => classify_quartile(baseline),
            DifficultyMode::Threshold { threshold } => Ok(classify_threshold(baseline, threshold)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRewardRow {
    pub class: Difficulty,
    pub num: usize,
    pub wins: usize,
    pub losses: usize,
    /// mean improvement over wins; `None` without wins
    pub reward: Option<f64>,
    /// mean (negative) change over losses; `None` without losses
    pub risk: Option<f64>,
}

fn same_queries(a: &PerQuery, b: &PerQuery) -> Result<()> {
    let ka: BTreeSet<&String> = a.keys().collect();
    let kb: BTreeSet<&String> = b.keys().collect();
    if ka == kb {
        return Ok(());
    }
    Err(Error::QueryMismatch(
        ka.symmetric_difference(&kb).map(|q| q.to_string()).collect(),
    ))
}

/// Wins, losses, reward and risk of `system` against `baseline` within each
/// difficulty class, in Easy, Medium, Hard order; classes with no queries
/// are left out.
pub fn win_loss_reward_risk(
    baseline: &PerQuery,
    system: &PerQuery,
    partition: &DifficultyPartition,
) -> Result<Vec<RiskRewardRow>> {
    same_queries(baseline, system)?;
    let part_keys: PerQuery = partition.classes.keys().map(|q| (q.clone(), 0.0)).collect();
    same_queries(baseline, &part_keys)?;
    let mut rows = Vec::new();
    for class in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let deltas: Vec<f64> = partition
            .classes
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(q, _)| system[q] - baseline[q])
            .collect();
        if deltas.is_empty() {
            continue;
        }
        let gains: Vec<f64> = deltas.iter().copied().filter(|&d| d > 0.0).collect();
        let drops: Vec<f64> = deltas.iter().copied().filter(|&d| d < 0.0).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        rows.push(RiskRewardRow {
            class,
            num: deltas.len(),
            wins: gains.len(),
            losses: drops.len(),
            reward: mean(&gains),
            risk: mean(&drops),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub query_id: String,
    pub delta: f64,
}

/// Slack on the omission threshold so that a difference printed as exactly
/// the threshold is not lost to rounding in `b - a`.
const DELTA_EPS: f64 = 1e-9;

/// `b - a` per query, keeping `|delta| >= omit_below`, largest first (ties
/// by query id).
pub fn delta_report(a: &PerQuery, b: &PerQuery, omit_below: f64) -> Result<Vec<DeltaEntry>> {
    same_queries(a, b)?;
    let mut out: Vec<DeltaEntry> = a
        .iter()
        .map(|(q, &va)| DeltaEntry {
            query_id: q.clone(),
            delta: b[q] - va,
        })
        .filter(|e| e.delta != 0.0 && e.delta.abs() >= omit_below - DELTA_EPS)
        .collect();
    out.sort_by(|x, y| y.delta.total_cmp(&x.delta).then_with(|| x.query_id.cmp(&y.query_id)));
    Ok(out)
}

/// A run under a display name.
#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    pub rankings: Vec<Ranking>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub metrics: Vec<Metric>,
    /// metric used for difficulty, reward/risk and deltas
    pub focus_metric: Metric,
    pub difficulty: DifficultyMode,
    pub omit_below: f64,
    pub eval: EvalConfig,
    /// evaluate queries missing from some runs as empty rankings instead of failing
    pub allow_missing: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Map, Metric::Ndcg(10), Metric::Mrr(10)],
            focus_metric: Metric::Ndcg(10),
            difficulty: DifficultyMode::Quartile,
            omit_below: 0.15,
            eval: EvalConfig::default(),
            allow_missing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub system: String,
    pub mean: f64,
    pub num_queries: usize,
    /// systems this one beats significantly on this metric
    pub improves_over: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric: Metric,
    pub rows: Vec<MetricRow>,
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub metric: Metric,
    pub system: String,
    pub versus: String,
    pub mean_delta: f64,
    pub t: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultySection {
    pub scheme: DifficultyMode,
    pub metric: Metric,
    pub partition: DifficultyPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRewardTable {
    pub system: String,
    pub rows: Vec<RiskRewardRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSection {
    pub metric: Metric,
    /// deltas are `minuend - subtrahend`
    pub minuend: String,
    pub subtrahend: String,
    pub omit_below: f64,
    pub entries: Vec<DeltaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: String,
    pub systems: Vec<String>,
    pub options: CompareOptions,
    pub metrics: Vec<MetricTable>,
    pub significance: Vec<SignificanceEntry>,
    pub difficulty: DifficultySection,
    pub risk_reward: Vec<RiskRewardTable>,
    pub deltas: Vec<DeltaSection>,
    pub per_query: BTreeMap<String, BTreeMap<String, PerQuery>>,
}

// Only judged queries matter: an unjudged query contributes to no metric, and
// a query that retrieved nothing cannot be represented in a run file at all.
fn check_query_sets(runs: &[&NamedRun], qrels: &Qrels) -> Result<()> {
    let sets: Vec<BTreeSet<&str>> = runs
        .iter()
        .map(|r| {
            r.rankings
                .iter()
                .map(|x| x.query_id.as_str())
                .filter(|q| qrels.judgments(q).is_some())
                .collect()
        })
        .collect();
    let union: BTreeSet<&str> = sets.iter().flatten().copied().collect();
    let offending: Vec<String> = union
        .iter()
        .filter(|q| sets.iter().any(|s| !s.contains(*q)))
        .map(|q| q.to_string())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::QueryMismatch(offending))
    }
}

/// Builds the full comparison. Significance is tested for every system
/// against the baseline and against every system listed before it, with a
/// Bonferroni correction over the tests of each metric.
pub fn compare(
    baseline: &NamedRun,
    systems: &[NamedRun],
    qrels: &Qrels,
    options: &CompareOptions,
) -> Result<ComparisonReport> {
    let all: Vec<&NamedRun> = std::iter::once(baseline).chain(systems).collect();
    let mut names = BTreeSet::new();
    for r in &all {
        if !names.insert(r.name.as_str()) {
            return Err(Error::InvalidParameter(format!("run name {:?} used twice", r.name)));
        }
    }
    if !options.allow_missing {
        check_query_sets(&all, qrels)?;
    }
    let mut metric_list = options.metrics.clone();
    if !metric_list.contains(&options.focus_metric) {
        metric_list.push(options.focus_metric);
    }

    let mut per_query: BTreeMap<String, BTreeMap<String, PerQuery>> = BTreeMap::new();
    let mut excluded: BTreeMap<Metric, Vec<String>> = BTreeMap::new();
    for &metric in &metric_list {
        let mut by_system = BTreeMap::new();
        for r in &all {
            let res = evaluate(&r.rankings, qrels, metric, &options.eval);
            excluded.insert(metric, res.excluded);
            by_system.insert(r.name.clone(), res.per_query);
        }
        per_query.insert(metric.to_string(), by_system);
    }
    let scores = |metric: Metric, name: &str| &per_query[&metric.to_string()][name];

    let pairs: Vec<(usize, usize)> = (1..all.len()).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let mut significance = Vec::new();
    let mut metrics = Vec::new();
    for &metric in &metric_list {
        let mut improves: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for &(i, j) in &pairs {
            let (sys, vs) = (scores(metric, &all[i].name), scores(metric, &all[j].name));
            let deltas: Vec<f64> = sys.iter().map(|(q, v)| v - vs[q]).collect();
            let mean_delta = if deltas.is_empty() {
                0.0
            } else {
                deltas.iter().sum::<f64>() / deltas.len() as f64
            };
            let test = paired_t_test(&deltas)?;
            let p_adjusted = bonferroni(test.p, pairs.len());
            let significant = is_significant(p_adjusted);
            if significant && test.t > 0.0 {
                improves.entry(&all[i].name).or_default().push(all[j].name.clone());
            }
            significance.push(SignificanceEntry {
                metric,
                system: all[i].name.clone(),
                versus: all[j].name.clone(),
                mean_delta,
                t: test.t,
                p: test.p,
                p_adjusted,
                significant,
            });
        }
        if options.metrics.contains(&metric) {
            metrics.push(MetricTable {
                metric,
                rows: all
                    .iter()
                    .map(|r| {
                        let pq = scores(metric, &r.name);
                        MetricRow {
                            system: r.name.clone(),
                            mean: if pq.is_empty() {
                                0.0
                            } else {
                                pq.values().sum::<f64>() / pq.len() as f64
                            },
                            num_queries: pq.len(),
                            improves_over: improves.get(r.name.as_str()).cloned().unwrap_or_default(),
                        }
                    })
                    .collect(),
                excluded: excluded[&metric].clone(),
            });
        }
    }

    let focus = options.focus_metric;
    let base_scores = scores(focus, &baseline.name);
    let partition = options.difficulty.classify(base_scores)?;
    let risk_reward = systems
        .iter()
        .map(|s| {
            Ok(RiskRewardTable {
                system: s.name.clone(),
                rows: win_loss_reward_risk(base_scores, scores(focus, &s.name), &partition)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut deltas = Vec::new();
    for &(j, i) in &pairs {
        deltas.push(DeltaSection {
            metric: focus,
            minuend: all[j].name.clone(),
            subtrahend: all[i].name.clone(),
            omit_below: options.omit_below,
            entries: delta_report(
                scores(focus, &all[i].name),
                scores(focus, &all[j].name),
                options.omit_below,
            )?,
        });
    }

    Ok(ComparisonReport {
        baseline: baseline.name.clone(),
        systems: systems.iter().map(|s| s.name.clone()).collect(),
        options: options.clone(),
        metrics,
        significance,
        difficulty: DifficultySection {
            scheme: options.difficulty,
            metric: focus,
            partition,
        },
        risk_reward,
        deltas,
        per_query,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    /// Table name -> CSV text.
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let mut metrics = String::from("metric,system,mean,num_queries,improves_over\n");
        for t in &self.metrics {
            for r in &t.rows {
                let _ = writeln!(
                    metrics,
                    "{},{},{},{},{}",
                    t.metric,
                    csv_field(&r.system),
                    r.mean,
                    r.num_queries,
                    csv_field(&r.improves_over.join(";"))
                );
            }
        }
        let mut sig = String::from("metric,system,versus,mean_delta,t,p,p_adjusted,significant\n");
        for s in &self.significance {
            let _ = writeln!(
                sig,
                "{},{},{},{},{},{},{},{}",
                s.metric,
                csv_field(&s.system),
                csv_field(&s.versus),
                s.mean_delta,
                s.t,
                s.p,
                s.p_adjusted,
                s.significant
            );
        }
        let mut rr = String::from("system,class,num,wins,losses,reward,risk\n");
        for t in &self.risk_reward {
            for r in &t.rows {
                let class = serde_json::to_value(r.class).unwrap();
                let _ = writeln!(
                    rr,
                    "{},{},{},{},{},{},{}",
                    csv_field(&t.system),
                    class.as_str().unwrap(),
                    r.num,
                    r.wins,
                    r.losses,
                    opt(r.reward),
                    opt(r.risk)
                );
            }
        }
        let mut diff = String::from("query_id,class\n");
        for (q, c) in &self.difficulty.partition.classes {
            let class = serde_json::to_value(c).unwrap();
            let _ = writeln!(diff, "{},{}", csv_field(q), class.as_str().unwrap());
        }
        let mut deltas = String::from("minuend,subtrahend,query_id,delta\n");
        for d in &self.deltas {
            for e in &d.entries {
                let _ = writeln!(
                    deltas,
                    "{},{},{},{}",
                    csv_field(&d.minuend),
                    csv_field(&d.subtrahend),
                    csv_field(&e.query_id),
                    e.delta
                );
            }
        }
        vec![
            ("metrics", metrics),
            ("significance", sig),
            ("risk_reward", rr),
            ("difficulty", diff),
            ("deltas", deltas),
        ]
    }
}
