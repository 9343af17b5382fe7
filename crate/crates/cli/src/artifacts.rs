//! Index directory layout and the `config.json` echo.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dualrep::bm25::Bm25Params;
use dualrep::ivfpq::{IvfPqParams, ResolvedParams};
use dualrep::EmbedderConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const PASSAGES_FILE: &str = "passages.tsv";
pub const SINGLE_FILE: &str = "passages.dve";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bm25,
    Single,
    Multi,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Bm25 => "bm25",
            Mode::Single => "single",
            Mode::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Deterministic hash-seeded token vectors.
    Synthetic,
    /// Precomputed vectors from `--embeddings`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub mode: Mode,
    pub corpus: String,
    pub num_passages: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bm25: Option<Bm25Params>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedder: Option<EmbedderKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedder_config: Option<EmbedderConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ivfpq_requested: Option<IvfPqParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ivfpq: Option<ResolvedParams>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_index_config(dir: &Path) -> Result<IndexConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `run.txt` -> `run.txt.config.json`
pub fn sidecar_config(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    output.with_file_name(name)
}
