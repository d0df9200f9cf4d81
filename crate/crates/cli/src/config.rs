//! Run configuration.
//!
//! Values are resolved in increasing precedence: built-in defaults, the JSON
//! config file (`--config`, or the file named by `GITEVAL_CONFIG`), then
//! command-line flags. Every run writes the fully resolved configuration to
//! `manifest.json`, which is itself a valid config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use giteval::attributes::{Attribute, ThresholdConfig};
use giteval::metrics::{MetricKind, ThresholdGrid, Weighting};
use serde::{Deserialize, Serialize};

/// Every setting of every subcommand; each command reads the fields it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that wrote the manifest. Informational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Tool version that wrote the manifest. Informational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_fail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<Attribute>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attr_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_attribute_frames: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_by: Option<MetricKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manual: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keyframes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shotcut: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    /// Curve grids in effect. Informational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grids: Option<BTreeMap<MetricKind, ThresholdGrid>>,
}

macro_rules! overlay {
    ($base:ident, $over:ident, $($field:ident),* $(,)?) => {
        RunConfig { $($field: $over.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `over` replace those of `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        let base = self;
        overlay!(
            base,
            over,
            command,
            version,
            dataset,
            results,
            client,
            listen,
            jobs,
            tau1,
            tau2,
            tau_fail,
            timeout_secs,
            weighting,
            thresholds,
            attributes,
            attr_dir,
            min_attribute_frames,
            rank_by,
            name,
            manual,
            keyframes,
            forward,
            backward,
            shotcut,
            inputs,
            grids,
        )
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn thresholds(&self) -> Result<ThresholdConfig> {
        let t = self.thresholds.clone().unwrap_or_default();
        t.validate().map_err(anyhow::Error::msg)?;
        Ok(t)
    }

    pub fn attribute_selection(&self) -> Vec<Attribute> {
        self.attributes.clone().unwrap_or_else(|| Attribute::ALL.to_vec())
    }

    pub fn require_path(field: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        field.clone().ok_or_else(|| {
            anyhow::anyhow!(
                "missing --{flag} (or \"{}\" in the config file)",
                flag.replace('-', "_")
            )
        })
    }

    pub fn write_manifest(&self, out: &Path) -> Result<()> {
        crate::output::write_json(&out.join("manifest.json"), self)
    }
}

pub fn all_grids() -> BTreeMap<MetricKind, ThresholdGrid> {
    MetricKind::ALL.into_iter().map(|m| (m, m.grid())).collect()
}

/// Absolute form of an input path, so that manifests work from any directory.
pub fn absolute(path: &Path) -> Result<PathBuf> {
    fs::canonicalize(path).with_context(|| format!("{} not found", path.display()))
}

/// Thresholds from a JSON file; omitted fields keep their defaults.
pub fn load_thresholds(path: &Path) -> Result<ThresholdConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading thresholds {}", path.display()))?;
    let t: ThresholdConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing thresholds {}", path.display()))?;
    t.validate().map_err(anyhow::Error::msg)?;
    Ok(t)
}
