//! Effective run configuration: command-line flags win over SQLROBUST_*
//! environment variables, which win over the JSON config file, which wins
//! over built-in defaults. The effective config is embedded in every report
//! artifact so a run can be reproduced exactly.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub budget: Option<usize>,
    pub max_edits: Option<usize>,
    pub candidates_per_span: Option<usize>,
    pub policy: Option<String>,
    pub providers: Option<String>,
    pub embedding_k: Option<usize>,
    pub embedding_min_similarity: Option<f64>,
    pub context_sentences: Option<usize>,
    pub proposer_top_k: Option<usize>,
    pub timeout_ms: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let data = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                serde_json::from_str(&data)
                    .with_context(|| format!("parsing config file {}", path.display()))
            }
        }
    }
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Option<T> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

/// Resolve one setting through the precedence chain.
pub fn resolve<T: std::str::FromStr + Clone>(
    flag: Option<T>,
    env_name: &str,
    file_value: Option<T>,
    default: T,
) -> T {
    flag.or_else(|| env_parse(env_name))
        .or(file_value)
        .unwrap_or(default)
}

/// The fully resolved settings embedded into artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub seed: u64,
    pub jobs: usize,
    pub budget: usize,
    pub max_edits: usize,
    pub candidates_per_span: usize,
    pub policy: String,
    pub providers: String,
    pub embedding_k: usize,
    pub embedding_min_similarity: f64,
    pub context_sentences: usize,
    pub proposer_top_k: usize,
    pub timeout_ms: u64,
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
