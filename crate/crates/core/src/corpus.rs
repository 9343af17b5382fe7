//! Text collections, relevance judgments and TREC run files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextEntry {
    pub id: String,
    pub text: String,
}

/// Ordered `id -> text` collection loaded from `id<TAB>text` lines. The
/// position of an entry in the file is its ordinal.
#[derive(Debug, Clone, Default)]
pub struct TextStore {
    entries: Vec<TextEntry>,
    by_id: HashMap<String, usize>,
}

pub type PassageStore = TextStore;
pub type QuerySet = TextStore;

impl TextStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry and returns its ordinal.
    pub fn push(&mut self, id: impl Into<String>, text: impl Into<String>) -> Result<usize> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidData("empty id".into()));
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId {
                id,
                line: self.entries.len() + 1,
            });
        }
        let ord = self.entries.len();
        self.by_id.insert(id.clone(), ord);
        self.entries.push(TextEntry { id, text: text.into() });
        Ok(ord)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path)
    }

    pub fn from_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 2 tab-separated fields, found {}", fields.len()),
                ));
            }
            if fields[0].is_empty() {
                return Err(Error::parse(origin, lineno, "empty id"));
            }
            store.push(fields[0], fields[1]).map_err(|e| match e {
                Error::DuplicateId { id, .. } => Error::DuplicateId { id, line: lineno },
                other => other,
            })?;
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&TextEntry> {
        self.entries.get(ordinal)
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn id(&self, ordinal: usize) -> &str {
        &self.entries[ordinal].id
    }

    pub fn text(&self, ordinal: usize) -> &str {
        &self.entries[ordinal].text
    }

    pub fn iter(&self) -> impl Iterator<Item = &TextEntry> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Serializes back to the `id<TAB>text` form.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}", e.id, e.text);
        }
        out
    }
}

/// Graded relevance judgments keyed by query then passage.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
    duplicate_warnings: usize,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a grade; returns true if it replaced an earlier judgment.
    pub fn insert(&mut self, qid: &str, pid: &str, grade: u32) -> bool {
        self.grades
            .entry(qid.to_string())
            .or_default()
            .insert(pid.to_string(), grade)
            .is_some()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path)
    }

    pub fn from_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut qrels = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected `qid 0 pid grade`, found {} fields", fields.len()),
                ));
            }
            let grade: i64 = fields[3]
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("non-integer grade {:?}", fields[3])))?;
            // Negative grades occur in some collections; they count as non-relevant.
            let grade = grade.max(0) as u32;
            if qrels.insert(fields[0], fields[2], grade) {
                qrels.duplicate_warnings += 1;
                warn!(
                    "{}:{}: duplicate judgment for ({}, {}), keeping the later one",
                    origin.display(),
                    lineno,
                    fields[0],
                    fields[2]
                );
            }
        }
        Ok(qrels)
    }

    pub fn grade(&self, qid: &str, pid: &str) -> u32 {
        self.grades.get(qid).and_then(|m| m.get(pid)).copied().unwrap_or(0)
    }

    pub fn judgments(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(qid)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.grades.len()
    }

    /// Number of duplicate (query, passage) pairs overwritten during loading.
    pub fn duplicate_warnings(&self) -> usize {
        self.duplicate_warnings
    }
}

/// Passages retrieved for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    pub fn new(query_id: impl Into<String>, entries: Vec<(String, f64)>) -> Self {
        Self {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn passage_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    /// Checks the non-increasing score and unique id invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, (pid, score)) in self.entries.iter().enumerate() {
            if !score.is_finite() {
                return Err(Error::InvalidData(format!(
                    "query {}: non-finite score for {}",
                    self.query_id, pid
                )));
            }
            if i > 0 && *score > self.entries[i - 1].1 {
                return Err(Error::InvalidData(format!(
                    "query {}: scores not descending at rank {}",
                    self.query_id,
                    i + 1
                )));
            }
            if !seen.insert(pid.as_str()) {
                return Err(Error::InvalidData(format!(
                    "query {}: passage {} ranked twice",
                    self.query_id, pid
                )));
            }
        }
        Ok(())
    }
}

/// Renders rankings as TREC run lines `qid Q0 pid rank score tag`.
pub fn format_run(rankings: &[Ranking], tag: &str) -> Result<String> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!("bad run tag {tag:?}")));
    }
    let mut out = String::new();
    for ranking in rankings {
        ranking.validate()?;
        for (rank, (pid, score)) in ranking.entries.iter().enumerate() {
            let _ = writeln!(out, "{} Q0 {} {} {:.6} {}", ranking.query_id, pid, rank + 1, score, tag);
        }
    }
    Ok(out)
}

pub fn write_run(rankings: &[Ranking], tag: &str, path: &Path) -> Result<()> {
    let text = format_run(rankings, tag)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_run(path: &Path) -> Result<Vec<Ranking>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_run_from(BufReader::new(file), path)
}

/// Parses run lines. Queries keep their order of first appearance; entries
/// within a query are ordered by the rank column.
pub fn parse_run_from(reader: impl BufRead, origin: &Path) -> Result<Vec<Ranking>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, String, f64)>> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(origin, lineno, format!("bad score {:?}", fields[4])))?;
        let qid = fields[0];
        if !rows.contains_key(qid) {
            order.push(qid.to_string());
        }
        rows.entry(qid.to_string())
            .or_default()
            .push((rank, fields[2].to_string(), score));
    }
    Ok(order
        .into_iter()
        .map(|qid| {
            let mut entries = rows.remove(&qid).unwrap_or_default();
            entries.sort_by_key(|(rank, _, _)| *rank);
            Ranking::new(qid, entries.into_iter().map(|(_, pid, s)| (pid, s)).collect())
        })
        .collect())
}
