use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dualrep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualrep"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dualrep(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const CORPUS: &str = "\
p1\tthe cat sat on the mat
p2\tdogs chase cats in the park
p3\tcerebral palsy and dysarthria in children
p4\tspeech therapy for dysarthria
p5\tthe park is green in summer
p6\tmat weaving is an old craft
";

const QUERIES: &str = "\
q1\tcat on a mat
q2\tdysarthria speech
q3\t
q4\tsummer park
q5\tdogs and cats
";

const QRELS: &str = "\
q1 0 p1 2
q1 0 p6 1
q2 0 p4 2
q2 0 p3 1
q4 0 p5 1
q4 0 p2 0
q5 0 p2 1
";

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.tsv"), CORPUS).unwrap();
    fs::write(dir.path().join("q.tsv"), QUERIES).unwrap();
    fs::write(dir.path().join("qrels"), QRELS).unwrap();
    dir
}

fn multi_index(dir: &Path) {
    ok(
        dir,
        &[
            "index", "--mode", "multi", "--corpus", "c.tsv", "--out", "idx", "--seed", "0",
        ],
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let dir = fixture();
    let out = ok(dir.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["index", "search", "evaluate", "compare", "explain"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn pq_m_must_divide_dim() {
    let dir = fixture();
    let out = dualrep(
        dir.path(),
        &[
            "index", "--mode", "multi", "--corpus", "c.tsv", "--out", "idx", "--pq-m", "7",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m must divide dim"));
}

#[test]
fn missing_corpus_is_an_error() {
    let dir = fixture();
    let out = dualrep(
        dir.path(),
        &["index", "--mode", "bm25", "--corpus", "nope.tsv", "--out", "idx"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn multi_index_is_reproducible() {
    let dir = fixture();
    ok(
        dir.path(),
        &[
            "index", "--mode", "multi", "--corpus", "c.tsv", "--out", "a", "--seed", "0",
        ],
    );
    ok(
        dir.path(),
        &[
            "index", "--mode", "multi", "--corpus", "c.tsv", "--out", "b", "--seed", "0",
        ],
    );
    for f in ["index.ivpq", "tokens.mve", "tokens.offsets", "passages.tsv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let config = read_json(&dir.path().join("a/config.json"));
    assert_eq!(config["mode"], "multi");
    assert_eq!(config["ivfpq"]["seed"], 0);
    assert_eq!(config["ivfpq_requested"]["sample_rate"], 0.05);
}

#[test]
fn empty_query_under_bm25_yields_no_results() {
    let dir = fixture();
    ok(
        dir.path(),
        &["index", "--mode", "bm25", "--corpus", "c.tsv", "--out", "idx"],
    );
    let out = ok(
        dir.path(),
        &["search", "--index", "idx", "--queries", "q.tsv", "--out", "run"],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("q3"));
    let run = fs::read_to_string(dir.path().join("run")).unwrap();
    assert!(!run.lines().any(|l| l.starts_with("q3 ")));
    assert!(run.lines().all(|l| l.ends_with(" bm25")));
    assert!(dir.path().join("run.config.json").exists());
}

#[test]
fn search_rejects_nprobe_beyond_nlist() {
    let dir = fixture();
    multi_index(dir.path());
    let out = dualrep(
        dir.path(),
        &[
            "search",
            "--index",
            "idx",
            "--queries",
            "q.tsv",
            "--out",
            "run",
            "--nprobe",
            "100000",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explain_self_match_is_one_per_token() {
    let dir = fixture();
    multi_index(dir.path());
    let out = ok(
        dir.path(),
        &[
            "explain",
            "--index",
            "idx",
            "--query",
            "speech therapy for dysarthria",
            "--passage-id",
            "p4",
        ],
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let matrix = report["matrix"].as_array().unwrap();
    assert_eq!(matrix.len(), 32);
    assert_eq!(matrix[0].as_array().unwrap().len(), 4);
    for (i, row) in matrix.iter().take(4).enumerate() {
        let j = report["argmax"][i].as_u64().unwrap() as usize;
        assert!((row[j].as_f64().unwrap() - 1.0).abs() < 1e-6);
    }
    assert!((report["score"].as_f64().unwrap() - 4.0).abs() < 1e-5);
    assert_eq!(report["doc_tokens"][3], "dysarthria");
}

#[test]
fn explain_score_matches_search_score() {
    let dir = fixture();
    multi_index(dir.path());
    ok(
        dir.path(),
        &[
            "search",
            "--index",
            "idx",
            "--queries",
            "q.tsv",
            "--out",
            "run",
            "--k",
            "3",
        ],
    );
    let run = fs::read_to_string(dir.path().join("run")).unwrap();
    let queries: Vec<(&str, &str)> = QUERIES.lines().filter_map(|l| l.split_once('\t')).collect();
    let mut checked = 0;
    for line in run.lines() {
        let f: Vec<&str> = line.split(' ').collect();
        let text = queries.iter().find(|(q, _)| *q == f[0]).unwrap().1;
        let out = ok(
            dir.path(),
            &["explain", "--index", "idx", "--query", text, "--passage-id", f[2]],
        );
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        let run_score: f64 = f[4].parse().unwrap();
        assert!((report["score"].as_f64().unwrap() - run_score).abs() < 5e-7, "{line}");
        checked += 1;
    }
    assert!(checked >= 6);
}

#[test]
fn explain_unknown_passage_fails() {
    let dir = fixture();
    multi_index(dir.path());
    let out = dualrep(
        dir.path(),
        &["explain", "--index", "idx", "--query", "cat", "--passage-id", "p99"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p99"));
}

#[test]
fn evaluate_writes_three_tables() {
    let dir = fixture();
    ok(
        dir.path(),
        &[
            "index", "--mode", "single", "--corpus", "c.tsv", "--out", "idx", "--dim", "32",
        ],
    );
    ok(
        dir.path(),
        &["search", "--index", "idx", "--queries", "q.tsv", "--out", "run"],
    );
    ok(
        dir.path(),
        &[
            "evaluate",
            "--qrels",
            "qrels",
            "--run",
            "run",
            "--metrics",
            "map,ndcg@10,mrr@10",
            "--out",
            "ev",
        ],
    );
    let report = read_json(&dir.path().join("ev/evaluate.json"));
    let metrics: Vec<&str> = report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["metric"].as_str().unwrap())
        .collect();
    assert_eq!(metrics, ["map", "ndcg@10", "mrr@10"]);
    for f in ["map.csv", "ndcg_at_10.csv", "mrr_at_10.csv", "summary.csv"] {
        assert!(dir.path().join("ev").join(f).exists(), "{f}");
    }
}

#[test]
fn compare_against_itself_is_neutral() {
    let dir = fixture();
    ok(
        dir.path(),
        &["index", "--mode", "bm25", "--corpus", "c.tsv", "--out", "idx"],
    );
    ok(
        dir.path(),
        &["search", "--index", "idx", "--queries", "q.tsv", "--out", "run"],
    );
    ok(
        dir.path(),
        &[
            "compare",
            "--qrels",
            "qrels",
            "--baseline",
            "a=run",
            "--run",
            "b=run",
            "--out",
            "cmp",
        ],
    );
    let report = read_json(&dir.path().join("cmp/report.json"));
    for s in report["significance"].as_array().unwrap() {
        assert_eq!(s["p"], 1.0);
        assert_eq!(s["mean_delta"], 0.0);
    }
    for d in report["deltas"].as_array().unwrap() {
        assert!(d["entries"].as_array().unwrap().is_empty());
    }
    let config = read_json(&dir.path().join("cmp/config.json"));
    assert_eq!(config["options"]["omit_below"], 0.15);
}

#[test]
fn compare_reports_missing_judged_queries() {
    let dir = fixture();
    ok(
        dir.path(),
        &["index", "--mode", "bm25", "--corpus", "c.tsv", "--out", "idx"],
    );
    ok(
        dir.path(),
        &["search", "--index", "idx", "--queries", "q.tsv", "--out", "run"],
    );
    let full = fs::read_to_string(dir.path().join("run")).unwrap();
    let partial: String = full
        .lines()
        .filter(|l| !l.starts_with("q2 "))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("partial"), partial).unwrap();
    let args = [
        "compare",
        "--qrels",
        "qrels",
        "--baseline",
        "run",
        "--run",
        "partial",
        "--out",
        "cmp",
    ];
    let out = dualrep(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q2"));

    let mut lenient = args.to_vec();
    lenient.push("--allow-missing");
    ok(dir.path(), &lenient);
}
