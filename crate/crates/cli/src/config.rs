//! Settings file for the CLI. Keys match the long flag names; a flag given on
//! the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub model: Option<String>,
    pub mu: Option<f64>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "N")]
    pub n_list: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub gamma_offset: Option<f64>,
    pub m_scale: Option<f64>,
    pub bootstrap: Option<usize>,
    pub time_budget: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub checks: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
