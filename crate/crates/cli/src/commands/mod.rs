//! Subcommand implementations.

pub mod attributes;
pub mod densify;
pub mod ope;
pub mod report;
pub mod rope;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use giteval::attributes::{sequence_attributes, AttributeVector, ImageFrames, ThresholdConfig};
use giteval::dataset::{list_sequences, load_sequence, parse_attributes_csv, SequenceRecord};
use rayon::prelude::*;

use crate::output::file_stem;
use crate::summary::Failure;

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("starting worker threads")
}

/// Loads every sequence under `root`, in name order. Sequences that fail to
/// load are reported, not fatal.
pub fn load_dataset(root: &Path, pool: &rayon::ThreadPool) -> Result<(Vec<SequenceRecord>, Vec<Failure>)> {
    let dirs = list_sequences(root)?;
    if dirs.is_empty() {
        anyhow::bail!("no sequences found under {}", root.display());
    }
    let loaded: Vec<_> = pool.install(|| dirs.par_iter().map(|d| (d, load_sequence(d))).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (dir, r) in loaded {
        match r {
            Ok(r) => records.push(r),
            Err(e) => failures.push(Failure {
                tracker: None,
                sequence: dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                message: e.to_string(),
            }),
        }
    }
    Ok((records, failures))
}

/// Attribute vectors of a sequence, read from `<attr_dir>/<id>.csv` when
/// given, otherwise computed from the frames.
pub fn attributes_for(
    record: &SequenceRecord,
    attr_dir: Option<&Path>,
    thresholds: &ThresholdConfig,
) -> Result<Vec<AttributeVector>, String> {
    let attrs = match attr_dir {
        Some(dir) => {
            let path = dir.join(format!("{}.csv", file_stem(&record.id)));
            let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_attributes_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => {
            let mut frames = ImageFrames::new(record.frame_paths.clone());
            sequence_attributes(&mut frames, record, thresholds).map_err(|e| e.to_string())?
        }
    };
    if attrs.len() != record.len() {
        return Err(format!(
            "{} attribute rows for {} frames",
            attrs.len(),
            record.len()
        ));
    }
    Ok(attrs)
}
