//! Command-line interface.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use giteval::attributes::Attribute;
use giteval::metrics::{MetricKind, Weighting};

use crate::config::{load_thresholds, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "giteval",
    version,
    about = "Evaluation engine for global instance tracking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; flags on the command line take precedence.
    #[arg(long, env = "GITEVAL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of sequences processed in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    /// Restrict the attribute breakdown (comma separated codes, e.g. FM,CC).
    #[arg(long = "attribute", value_delimiter = ',')]
    pub attributes: Vec<Attribute>,
    /// Directory of precomputed `<sequence>.csv` attribute files.
    #[arg(long)]
    pub attr_dir: Option<PathBuf>,
    /// Attribute threshold overrides (JSON).
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Smallest number of frames for an attribute to get its own curves.
    #[arg(long)]
    pub min_attribute_frames: Option<usize>,
    /// Metric that orders the ranking table.
    #[arg(long)]
    pub rank_by: Option<MetricKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute per-frame challenge attributes of every sequence.
    Attributes {
        #[command(flatten)]
        common: Common,
        /// Dataset root holding one directory per sequence.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Attribute threshold overrides (JSON).
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Build a dense track from sparse manual labels and two tracker passes.
    Densify {
        #[command(flatten)]
        common: Common,
        /// Manual labels in ground-truth format; non-keyframes may be NaN.
        #[arg(long)]
        manual: Option<PathBuf>,
        /// 1-based keyframe indices; defaults to every labelled line.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        /// Forward tracker pass.
        #[arg(long)]
        forward: Option<PathBuf>,
        /// Backward tracker pass, in forward frame order.
        #[arg(long)]
        backward: Option<PathBuf>,
        /// Shot-cut flags (mask or index list).
        #[arg(long)]
        shotcut: Option<PathBuf>,
        #[arg(long)]
        tau1: Option<f64>,
        #[arg(long)]
        tau2: Option<f64>,
    },
    /// One-pass evaluation of stored result files.
    EvalOpe {
        #[command(flatten)]
        common: Common,
        /// Dataset root holding one directory per sequence.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory with one sub-directory of `<sequence>.txt` files per tracker.
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        attrs: AttributeArgs,
    },
    /// Restart-based evaluation of a live tracker.
    EvalRope {
        #[command(flatten)]
        common: Common,
        /// Dataset root holding one directory per sequence.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Shell command starting one tracker process per sequence.
        #[arg(long, conflicts_with = "listen")]
        client: Option<String>,
        /// Address to accept one tracker connection per sequence on.
        #[arg(long)]
        listen: Option<String>,
        /// IoU below which a prediction counts as a failure.
        #[arg(long)]
        tau_fail: Option<f64>,
        /// Seconds to wait for each tracker reply.
        #[arg(long)]
        timeout: Option<f64>,
        /// Correlation weighting of the robustness score.
        #[arg(long)]
        weighting: Option<Weighting>,
        /// Tracker name used in reports.
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        attrs: AttributeArgs,
    },
    /// Merge evaluation directories into one report.
    Report {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON config file; flags on the command line take precedence.
        #[arg(long, env = "GITEVAL_CONFIG")]
        config: Option<PathBuf>,
        /// Evaluation output directories.
        inputs: Vec<PathBuf>,
    },
}

fn thresholds(path: &Option<PathBuf>) -> Result<Option<giteval::ThresholdConfig>> {
    path.as_deref().map(load_thresholds).transpose()
}

impl AttributeArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<()> {
        if !self.attributes.is_empty() {
            c.attributes = Some(self.attributes.clone());
        }
        c.attr_dir = self.attr_dir.clone();
        c.thresholds = thresholds(&self.thresholds)?;
        c.min_attribute_frames = self.min_attribute_frames;
        c.rank_by = self.rank_by;
        Ok(())
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Attributes { .. } => "attributes",
            Command::Densify { .. } => "densify",
            Command::EvalOpe { .. } => "eval-ope",
            Command::EvalRope { .. } => "eval-rope",
            Command::Report { .. } => "report",
        }
    }

    pub fn config_path(&self) -> Option<&PathBuf> {
        match self {
            Command::Attributes { common, .. }
            | Command::Densify { common, .. }
            | Command::EvalOpe { common, .. }
            | Command::EvalRope { common, .. } => common.config.as_ref(),
            Command::Report { config, .. } => config.as_ref(),
        }
    }

    pub fn out(&self) -> &PathBuf {
        match self {
            Command::Attributes { common, .. }
            | Command::Densify { common, .. }
            | Command::EvalOpe { common, .. }
            | Command::EvalRope { common, .. } => &common.out,
            Command::Report { out, .. } => out,
        }
    }

    /// Settings given on the command line.
    pub fn overrides(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        match self {
            Command::Attributes {
                common,
                dataset,
                thresholds: t,
            } => {
                c.jobs = common.jobs;
                c.dataset = dataset.clone();
                c.thresholds = thresholds(t)?;
            }
            Command::Densify {
                common,
                manual,
                keyframes,
                forward,
                backward,
                shotcut,
                tau1,
                tau2,
            } => {
                c.jobs = common.jobs;
                c.manual = manual.clone();
                c.keyframes = keyframes.clone();
                c.forward = forward.clone();
                c.backward = backward.clone();
                c.shotcut = shotcut.clone();
                c.tau1 = *tau1;
                c.tau2 = *tau2;
            }
            Command::EvalOpe {
                common,
                dataset,
                results,
                attrs,
            } => {
                c.jobs = common.jobs;
                c.dataset = dataset.clone();
                c.results = results.clone();
                attrs.apply(&mut c)?;
            }
            Command::EvalRope {
                common,
                dataset,
                client,
                listen,
                tau_fail,
                timeout,
                weighting,
                name,
                attrs,
            } => {
                c.jobs = common.jobs;
                c.dataset = dataset.clone();
                c.client = client.clone();
                c.listen = listen.clone();
                c.tau_fail = *tau_fail;
                c.timeout_secs = *timeout;
                c.weighting = *weighting;
                c.name = name.clone();
                attrs.apply(&mut c)?;
            }
            Command::Report { inputs, .. } => {
                if !inputs.is_empty() {
                    c.inputs = Some(inputs.clone());
                }
            }
        }
        Ok(c)
    }
}
