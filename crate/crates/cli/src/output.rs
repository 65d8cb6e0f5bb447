use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Directory for one experiment under the output root.
pub fn run_dir(root: &Path, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = root.join(
        cfg.output
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.name)),
    );
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub arguments: &'a [String],
    pub config_sha256: String,
    pub data_seed: u64,
    pub chain_seeds: Vec<u64>,
    pub config: &'a ExperimentConfig,
}

impl<'a> Manifest<'a> {
    pub fn new(
        command: &'a str,
        arguments: &'a [String],
        cfg: &'a ExperimentConfig,
    ) -> anyhow::Result<Self> {
        let canonical = serde_json::to_vec(cfg)?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments: arguments.get(1..).unwrap_or_default(),
            config_sha256: hex(&Sha256::digest(&canonical)),
            data_seed: cfg.data.seed,
            chain_seeds: vec![],
            config: cfg,
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join(format!("{}.manifest.json", self.command)), self)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
