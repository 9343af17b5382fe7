use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use dualrep::corpus::parse_run;
use dualrep::eval::{compare, evaluate, CompareOptions, DifficultyMode, EvalConfig, Metric, MetricResult, NamedRun};
use dualrep::Qrels;
use log::warn;
use serde::Serialize;

use crate::artifacts;
use crate::usage;

fn parse_metrics(s: &str) -> Result<Vec<Metric>> {
    let metrics = s
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Metric>, _>>()?;
    if metrics.is_empty() {
        return Err(usage!("no metrics given"));
    }
    Ok(metrics)
}

fn load_qrels(path: &Path) -> Result<Qrels> {
    let qrels = Qrels::load(path)?;
    if qrels.duplicate_warnings() > 0 {
        warn!(
            "{}: {} duplicate judgments overwritten",
            path.display(),
            qrels.duplicate_warnings()
        );
    }
    Ok(qrels)
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated list of map, ndcg@K, mrr@K.
    #[arg(long, default_value = "map,ndcg@10,mrr@10")]
    pub metrics: String,
    /// Minimum grade counted as relevant for MAP and MRR.
    #[arg(long, default_value_t = 1)]
    pub binarize_at: u32,
    /// Ranking depth used for MAP.
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    run: String,
    qrels: String,
    config: EvalConfig,
    duplicate_judgments: usize,
    metrics: &'a [MetricResult],
}

pub fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let metrics = parse_metrics(&args.metrics)?;
    let qrels = load_qrels(&args.qrels)?;
    let rankings = parse_run(&args.run)?;
    let config = EvalConfig {
        binarize_at: args.binarize_at,
        depth: args.depth,
    };
    let results: Vec<MetricResult> = metrics
        .iter()
        .map(|&m| evaluate(&rankings, &qrels, m, &config))
        .collect();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut summary = String::from("metric,mean,num_queries,excluded\n");
    for r in &results {
        println!("{}\t{:.4}\t({} queries)", r.metric, r.mean, r.per_query.len());
        summary.push_str(&format!(
            "{},{},{},{}\n",
            r.metric,
            r.mean,
            r.per_query.len(),
            r.excluded.len()
        ));
        let mut table = String::from("query_id,value\n");
        for (q, v) in &r.per_query {
            table.push_str(&format!("{q},{v}\n"));
        }
        let name = format!("{}.csv", r.metric.to_string().replace('@', "_at_"));
        write_text(&args.out.join(name), &table)?;
    }
    write_text(&args.out.join("summary.csv"), &summary)?;
    artifacts::write_json(
        &args.out.join("evaluate.json"),
        &EvaluateReport {
            run: args.run.display().to_string(),
            qrels: args.qrels.display().to_string(),
            config,
            duplicate_judgments: qrels.duplicate_warnings(),
            metrics: &results,
        },
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    /// Reference system, as `name=path` or a path (named after the file stem).
    #[arg(long)]
    pub baseline: String,
    /// Compared system, as `name=path` or a path; repeatable. Deltas are
    /// reported for every later run minus every earlier one, baseline first.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
    /// Metric tables to report.
    #[arg(long, default_value = "map,ndcg@10,mrr@10")]
    pub metrics: String,
    /// Metric driving difficulty classes, reward/risk and deltas.
    #[arg(long, default_value = "ndcg@10")]
    pub metric: String,
    /// `quartile` or `threshold:T` (Hard iff baseline metric <= T).
    #[arg(long, default_value = "quartile")]
    pub difficulty: String,
    /// Per-query deltas smaller than this in absolute value are omitted.
    #[arg(long, default_value_t = 0.15)]
    pub omit_below: f64,
    #[arg(long, default_value_t = 1)]
    pub binarize_at: u32,
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,
    /// Treat queries missing from a run as empty rankings instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn named_run(spec: &str) -> Result<NamedRun> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
        _ => {
            let p = PathBuf::from(spec);
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| usage!("cannot name run {spec:?}"))?
                .to_string();
            (stem, p)
        }
    };
    Ok(NamedRun {
        name,
        rankings: parse_run(&path)?,
    })
}

pub fn run_compare(args: CompareArgs) -> Result<()> {
    let options = CompareOptions {
        metrics: parse_metrics(&args.metrics)?,
        focus_metric: args.metric.parse()?,
        difficulty: args.difficulty.parse::<DifficultyMode>()?,
        omit_below: args.omit_below,
        eval: EvalConfig {
            binarize_at: args.binarize_at,
            depth: args.depth,
        },
        allow_missing: args.allow_missing,
    };
    let qrels = load_qrels(&args.qrels)?;
    let baseline = named_run(&args.baseline)?;
    let systems = args.runs.iter().map(|s| named_run(s)).collect::<Result<Vec<_>>>()?;
    let report = compare(&baseline, &systems, &qrels, &options)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    artifacts::write_json(&args.out.join("report.json"), &report)?;
    for (name, csv) in report.csv_tables() {
        write_text(&args.out.join(format!("{name}.csv")), &csv)?;
    }
    artifacts::write_json(
        &args.out.join(artifacts::CONFIG_FILE),
        &serde_json::json!({
            "qrels": args.qrels.display().to_string(),
            "baseline": args.baseline,
            "runs": args.runs,
            "options": options,
        }),
    )?;

    for table in &report.metrics {
        for row in &table.rows {
            let marks = if row.improves_over.is_empty() {
                String::new()
            } else {
                format!("  > {}", row.improves_over.join(", "))
            };
            println!("{}\t{}\t{:.4}{}", table.metric, row.system, row.mean, marks);
        }
    }
    Ok(())
}
