//! `attributes`: per-frame challenge attributes of a dataset.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use giteval::attributes::{mean_correlation, Attribute, AttributeVector};
use giteval::dataset::write_attributes_csv;
use rayon::prelude::*;
use serde::Serialize;

use super::{attributes_for, load_dataset, thread_pool};
use crate::config::{absolute, RunConfig};
use crate::output::{file_stem, write_file, write_json};
use crate::summary::Failure;
use crate::Outcome;

#[derive(Debug, Serialize)]
struct SequenceCounts {
    id: String,
    frames: usize,
    counts: BTreeMap<Attribute, usize>,
    mean_correlation: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AttributeSummary {
    frames: usize,
    /// Frames carrying each attribute over the whole dataset.
    counts: BTreeMap<Attribute, usize>,
    frequency: BTreeMap<Attribute, f64>,
    sequences: Vec<SequenceCounts>,
    errors: Vec<Failure>,
}

fn counts(attrs: &[AttributeVector]) -> BTreeMap<Attribute, usize> {
    Attribute::ALL
        .into_iter()
        .map(|a| (a, attrs.iter().filter(|v| v.flag(a)).count()))
        .collect()
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let dataset = absolute(&RunConfig::require_path(&cfg.dataset, "dataset")?)?;
    let thresholds = cfg.thresholds()?;
    let pool = thread_pool(cfg.jobs())?;
    let (records, mut failures) = load_dataset(&dataset, &pool)?;

    let computed: Vec<_> = pool.install(|| {
        records
            .par_iter()
            .map(|r| (r, attributes_for(r, None, &thresholds)))
            .collect()
    });

    let mut sequences = Vec::new();
    for (record, result) in computed {
        match result {
            Ok(attrs) => {
                write_file(
                    &out.join(format!("{}.csv", file_stem(&record.id))),
                    &write_attributes_csv(&attrs),
                )?;
                sequences.push(SequenceCounts {
                    id: record.id.clone(),
                    frames: attrs.len(),
                    counts: counts(&attrs),
                    mean_correlation: mean_correlation(&attrs),
                });
            }
            Err(message) => failures.push(Failure {
                tracker: None,
                sequence: record.id.clone(),
                message,
            }),
        }
    }
    failures.sort_by(|a, b| a.sequence.cmp(&b.sequence));

    let frames: usize = sequences.iter().map(|s| s.frames).sum();
    let totals: BTreeMap<Attribute, usize> = Attribute::ALL
        .into_iter()
        .map(|a| (a, sequences.iter().map(|s| s.counts[&a]).sum()))
        .collect();
    let frequency = totals
        .iter()
        .map(|(&a, &n)| {
            (
                a,
                if frames == 0 {
                    0.0
                } else {
                    n as f64 / frames as f64
                },
            )
        })
        .collect();
    write_json(
        &out.join("summary.json"),
        &AttributeSummary {
            frames,
            counts: totals,
            frequency,
            sequences,
            errors: failures.clone(),
        },
    )?;

    RunConfig {
        command: Some("attributes".into()),
        version: Some(env!("CARGO_PKG_VERSION").into()),
        dataset: Some(dataset),
        jobs: Some(cfg.jobs()),
        thresholds: Some(thresholds),
        ..Default::default()
    }
    .write_manifest(out)?;
    Ok(Outcome { failures })
}
