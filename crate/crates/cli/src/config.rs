use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Deserialize;

use collabq::presets;
use collabq::SystemParams;

/// Keys accepted in a `--config` JSON file. Any other key is an error.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "C1")]
    pub c1: Option<u32>,
    #[serde(rename = "C2")]
    pub c2: Option<u32>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub h0: Option<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub imax: Option<u32>,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub i0: Option<u32>,
    pub k0: Option<u32>,
    pub l0: Option<u32>,
    pub policy: Option<String>,
    pub index: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// JSON file with parameters and command options; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from a built-in example (ex1, ex2, ex3, ex3b, ex4, ex4b, ex5, ex7, ex8).
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long)]
    pub c1: Option<u32>,
    #[arg(long)]
    pub c2: Option<u32>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long)]
    pub h1: Option<f64>,
    #[arg(long)]
    pub h2: Option<f64>,
}

/// Problem with the command line or config file; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl ParamArgs {
    pub fn file(&self) -> anyhow::Result<FileConfig> {
        match &self.config {
            Some(path) => FileConfig::load(path).map_err(|e| usage(format!("{e:#}"))),
            None => Ok(FileConfig::default()),
        }
    }

    /// Example preset, then config file, then flags.
    pub fn resolve(&self, file: &FileConfig) -> anyhow::Result<SystemParams> {
        let base = match &self.example {
            Some(name) => Some(presets::example(name).ok_or_else(|| usage(format!("unknown example `{name}`")))?),
            None => None,
        };
        let pick_u = |flag: Option<u32>, from_file: Option<u32>, from_base: Option<u32>, name: &str| {
            flag.or(from_file).or(from_base).ok_or_else(|| usage(format!("missing --{name}")))
        };
        let pick_f = |flag: Option<f64>, from_file: Option<f64>, from_base: Option<f64>, name: &str| {
            flag.or(from_file).or(from_base).ok_or_else(|| usage(format!("missing --{name}")))
        };
        let c1 = pick_u(self.c1, file.c1, base.map(|b| b.c1), "c1")?;
        let c2 = pick_u(self.c2, file.c2, base.map(|b| b.c2), "c2")?;
        let mu1 = pick_f(self.mu1, file.mu1, base.map(|b| b.mu1), "mu1")?;
        let mu2 = pick_f(self.mu2, file.mu2, base.map(|b| b.mu2), "mu2")?;
        let h0 = pick_f(self.h0, file.h0, base.map(|b| b.h0), "h0")?;
        let h1 = pick_f(self.h1, file.h1, base.map(|b| b.h1), "h1")?;
        let h2 = pick_f(self.h2, file.h2, base.map(|b| b.h2), "h2")?;
        SystemParams::new(c1, c2, mu1, mu2, h0, h1, h2).map_err(|e| usage(e.to_string()))
    }
}
