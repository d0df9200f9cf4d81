//! `eval-ope`: one-pass evaluation of stored result files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use giteval::attributes::{Attribute, AttributeVector};
use giteval::dataset::{parse_results, SequenceRecord};
use giteval::metrics::{
    aggregate, evaluate_ope, pooled_attribute_breakdown, MetricKind, SequenceEvaluation,
    DEFAULT_MIN_ATTRIBUTE_FRAMES,
};
use rayon::prelude::*;

use super::{attributes_for, load_dataset, thread_pool};
use crate::config::{absolute, all_grids, RunConfig};
use crate::output::{file_stem, write_curves, write_file, write_json};
use crate::summary::{
    ranking_markdown, scores_of, AggregateSummary, AttributeEntry, Failure, Mechanism, SequenceSummary,
    Summary, TrackerSummary,
};
use crate::Outcome;

pub const DEFAULT_RANK_BY: MetricKind = MetricKind::SrIou;

/// Tracker result directories: one per sub-directory, or the directory itself
/// when it holds result files directly.
pub fn discover_trackers(results: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut dirs = Vec::new();
    let mut has_files = false;
    for entry in fs::read_dir(results).with_context(|| format!("reading {}", results.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            let name = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            dirs.push((name, path));
        } else if path.extension().is_some_and(|e| e == "txt") {
            has_files = true;
        }
    }
    if dirs.is_empty() && has_files {
        let name = results
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "tracker".into());
        dirs.push((name, results.to_path_buf()));
    }
    dirs.sort();
    Ok(dirs)
}

/// Attribute settings shared by both evaluation commands.
pub(crate) struct Breakdown<'a> {
    pub selection: &'a [Attribute],
    pub min_frames: usize,
    /// Attribute vectors per sequence id, when available.
    pub attrs: &'a BTreeMap<String, Vec<AttributeVector>>,
}

/// Writes the curve files of one tracker below `dir` and summarizes it.
pub(crate) fn summarize_tracker(
    name: &str,
    evals: &[SequenceEvaluation],
    breakdown: &Breakdown<'_>,
    dir: &Path,
) -> Result<TrackerSummary> {
    let mut sequences = Vec::with_capacity(evals.len());
    for e in evals {
        write_curves(&dir.join("sequences").join(file_stem(&e.sequence_id)), &e.curves)?;
        sequences.push(SequenceSummary::from_evaluation(e));
    }
    if evals.is_empty() {
        return Ok(TrackerSummary {
            name: name.to_string(),
            sequences,
            aggregate: None,
            attributes: BTreeMap::new(),
            robustness: None,
        });
    }
    let agg = aggregate(evals)?;
    write_curves(&dir.join("curves"), &agg.curves)?;

    let inputs: Vec<(&SequenceEvaluation, &[AttributeVector])> = evals
        .iter()
        .filter_map(|e| breakdown.attrs.get(&e.sequence_id).map(|a| (e, a.as_slice())))
        .collect();
    let mut attributes = BTreeMap::new();
    if !inputs.is_empty() {
        for (a, b) in pooled_attribute_breakdown(&inputs, breakdown.selection, breakdown.min_frames)? {
            if let Some(curves) = &b.curves {
                write_curves(&dir.join("attributes").join(a.code()), curves)?;
            }
            attributes.insert(
                a,
                AttributeEntry {
                    sequences: b.sequences,
                    frames: b.frames,
                    scores: b.curves.as_deref().map(scores_of),
                },
            );
        }
    }
    Ok(TrackerSummary {
        name: name.to_string(),
        sequences,
        aggregate: Some(AggregateSummary::from(&agg)),
        attributes,
        robustness: None,
    })
}

/// Attribute vectors of every record, computed in parallel. Sequences whose
/// attributes are unavailable are left out of breakdowns with a warning.
pub(crate) fn collect_attributes(
    records: &[SequenceRecord],
    cfg: &RunConfig,
    attr_dir: Option<&Path>,
    pool: &rayon::ThreadPool,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<String, Vec<AttributeVector>>> {
    let thresholds = cfg.thresholds()?;
    let computed: Vec<_> = pool.install(|| {
        records
            .par_iter()
            .map(|r| (r.id.clone(), attributes_for(r, attr_dir, &thresholds)))
            .collect()
    });
    let mut out = BTreeMap::new();
    for (id, r) in computed {
        match r {
            Ok(a) => {
                out.insert(id, a);
            }
            Err(e) => {
                log::warn!("{id}: attributes unavailable: {e}");
                warnings.push(format!("{id}: attributes unavailable: {e}"));
            }
        }
    }
    Ok(out)
}

fn evaluate_tracker_sequence(
    record: &SequenceRecord,
    dir: &Path,
) -> Result<(SequenceEvaluation, Vec<String>), String> {
    let path = dir.join(format!("{}.txt", file_stem(&record.id)));
    let text = fs::read_to_string(&path).map_err(|_| format!("missing result file {}", path.display()))?;
    let (track, warnings) =
        parse_results(&record.id, &text).map_err(|e| format!("{}: {e}", path.display()))?;
    let eval = evaluate_ope(record, &track).map_err(|e| e.to_string())?;
    Ok((eval, warnings))
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.client.is_some() || cfg.listen.is_some() {
        bail!("eval-ope evaluates stored results; use eval-rope for --client or --listen");
    }
    let dataset = absolute(&RunConfig::require_path(&cfg.dataset, "dataset")?)?;
    let results = absolute(&RunConfig::require_path(&cfg.results, "results")?)?;
    let attr_dir = cfg.attr_dir.as_deref().map(absolute).transpose()?;
    let thresholds = cfg.thresholds()?;
    let selection = cfg.attribute_selection();
    let min_frames = cfg.min_attribute_frames.unwrap_or(DEFAULT_MIN_ATTRIBUTE_FRAMES);
    let rank_by = cfg.rank_by.unwrap_or(DEFAULT_RANK_BY);
    let jobs = cfg.jobs();
    let pool = thread_pool(jobs)?;

    let (records, mut errors) = load_dataset(&dataset, &pool)?;
    let trackers = discover_trackers(&results)?;
    if trackers.is_empty() {
        bail!("no tracker results under {}", results.display());
    }
    let mut warnings = Vec::new();
    let attrs = collect_attributes(&records, cfg, attr_dir.as_deref(), &pool, &mut warnings)?;
    let breakdown = Breakdown {
        selection: &selection,
        min_frames,
        attrs: &attrs,
    };

    let mut summaries = Vec::new();
    for (name, dir) in &trackers {
        let evaluated: Vec<_> = pool.install(|| {
            records
                .par_iter()
                .map(|r| (r, evaluate_tracker_sequence(r, dir)))
                .collect()
        });
        let mut evals = Vec::new();
        for (record, r) in evaluated {
            match r {
                Ok((eval, w)) => {
                    for w in w {
                        log::warn!("{name}/{}: {w}", record.id);
                        warnings.push(format!("{name}/{}: {w}", record.id));
                    }
                    evals.push(eval);
                }
                Err(message) => errors.push(Failure {
                    tracker: Some(name.clone()),
                    sequence: record.id.clone(),
                    message,
                }),
            }
        }
        summaries.push(summarize_tracker(
            name,
            &evals,
            &breakdown,
            &out.join(file_stem(name)),
        )?);
    }

    let summary = Summary {
        mechanism: Mechanism::Ope,
        rank_by,
        trackers: summaries,
        errors: errors.clone(),
        warnings,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_file(&out.join("ranking.md"), &ranking_markdown(&summary))?;

    RunConfig {
        command: Some("eval-ope".into()),
        version: Some(env!("CARGO_PKG_VERSION").into()),
        dataset: Some(dataset),
        results: Some(results),
        jobs: Some(jobs),
        thresholds: Some(thresholds),
        attributes: Some(selection),
        attr_dir,
        min_attribute_frames: Some(min_frames),
        rank_by: Some(rank_by),
        grids: Some(all_grids()),
        ..Default::default()
    }
    .write_manifest(out)?;
    Ok(Outcome { failures: errors })
}
