//! `densify`: dense labels for one sequence from sparse manual keyframes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use giteval::dataset::{parse_flags, parse_groundtruth, parse_index_list, parse_results, write_track};
use giteval::densify::{densify_sequence, ManualTrack, Provenance, DEFAULT_TAU1, DEFAULT_TAU2};
use serde::Serialize;

use crate::config::{absolute, RunConfig};
use crate::output::{write_file, write_json};
use crate::Outcome;

#[derive(Debug, Serialize)]
struct DensifySummary {
    frames: usize,
    keyframes: usize,
    provenance: BTreeMap<String, usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn input(field: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    absolute(&RunConfig::require_path(field, flag)?)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let manual_path = input(&cfg.manual, "manual")?;
    let forward_path = input(&cfg.forward, "forward")?;
    let backward_path = input(&cfg.backward, "backward")?;
    let keyframes_path = cfg.keyframes.as_deref().map(absolute).transpose()?;
    let shotcut_path = cfg.shotcut.as_deref().map(absolute).transpose()?;
    let tau1 = cfg.tau1.unwrap_or(DEFAULT_TAU1);
    let tau2 = cfg.tau2.unwrap_or(DEFAULT_TAU2);

    let boxes = parse_groundtruth(&read(&manual_path)?)
        .with_context(|| format!("parsing {}", manual_path.display()))?;
    let n = boxes.len();
    let keyframes = match &keyframes_path {
        Some(path) => {
            let list =
                parse_index_list(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            let mut frames = Vec::with_capacity(list.len());
            for (line, k) in list {
                if k == 0 || k > n {
                    bail!("{} line {line}: frame {k} outside 1..={n}", path.display());
                }
                if boxes[k - 1].is_none() {
                    bail!("{} line {line}: frame {k} has no manual label", path.display());
                }
                frames.push(k);
            }
            frames.sort_unstable();
            frames.dedup();
            frames
        }
        None => (1..=n).filter(|&k| boxes[k - 1].is_some()).collect(),
    };
    let keyframe_count = keyframes.len();

    let (forward, fw) = parse_results("forward", &read(&forward_path)?)
        .with_context(|| format!("parsing {}", forward_path.display()))?;
    let (backward, bw) = parse_results("backward", &read(&backward_path)?)
        .with_context(|| format!("parsing {}", backward_path.display()))?;
    for w in fw.iter().chain(&bw) {
        log::warn!("{w}");
    }
    let shotcut = match &shotcut_path {
        Some(path) => parse_flags(&read(path)?, n).with_context(|| format!("parsing {}", path.display()))?,
        None => vec![false; n],
    };

    let dense = densify_sequence(
        &ManualTrack { boxes, keyframes },
        &forward,
        &backward,
        &shotcut,
        tau1,
        tau2,
    )?;
    let dense_boxes: Vec<_> = dense.boxes.iter().copied().map(Some).collect();
    write_file(&out.join("dense.txt"), &write_track(&dense_boxes))?;
    write_file(&out.join("provenance.csv"), &dense.provenance_csv())?;

    let provenance = Provenance::ALL
        .into_iter()
        .map(|p| {
            (
                p.tag().to_string(),
                dense.provenance.iter().filter(|&&q| q == p).count(),
            )
        })
        .collect();
    write_json(
        &out.join("summary.json"),
        &DensifySummary {
            frames: n,
            keyframes: keyframe_count,
            provenance,
        },
    )?;

    RunConfig {
        command: Some("densify".into()),
        version: Some(env!("CARGO_PKG_VERSION").into()),
        jobs: Some(cfg.jobs()),
        manual: Some(manual_path),
        keyframes: keyframes_path,
        forward: Some(forward_path),
        backward: Some(backward_path),
        shotcut: shotcut_path,
        tau1: Some(tau1),
        tau2: Some(tau2),
        ..Default::default()
    }
    .write_manifest(out)?;
    Ok(Outcome::default())
}
