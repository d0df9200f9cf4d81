//! `report`: merges evaluation directories into one Markdown/JSON report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{absolute, RunConfig};
use crate::output::{write_file, write_json};
use crate::summary::{columns, ranking_table, ranks, Summary};
use crate::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub source: PathBuf,
    pub summary: Summary,
    /// Curve CSV files of the run, relative to `source`.
    pub curves: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<ReportRun>,
}

fn curve_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_run(dir: &Path) -> Result<ReportRun> {
    let path = dir.join("summary.json");
    if !path.is_file() {
        bail!(
            "{} holds no summary.json; is it an evaluation output?",
            dir.display()
        );
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let summary: Summary =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(ReportRun {
        source: dir.to_path_buf(),
        summary,
        curves: curve_files(dir)?,
    })
}

fn combined_table(runs: &[ReportRun]) -> String {
    let names: BTreeSet<&str> = runs
        .iter()
        .flat_map(|r| r.summary.trackers.iter().map(|t| t.name.as_str()))
        .collect();
    let mut out = String::from("| Tracker |");
    let mut sep = String::from("|---|");
    // per run and column: (value, rank) for each tracker name
    let mut cells: Vec<Vec<(Option<f64>, Option<usize>)>> = Vec::new();
    for run in runs {
        let s = &run.summary;
        for col in columns(s.mechanism) {
            let _ = write!(out, " {} {} | # |", s.mechanism.label(), col.header());
            sep.push_str("---:|---:|");
            let values: Vec<Option<f64>> = s.trackers.iter().map(|t| col.value(t)).collect();
            let r = ranks(&values);
            cells.push(
                names
                    .iter()
                    .map(|n| {
                        s.trackers
                            .iter()
                            .position(|t| t.name == *n)
                            .map_or((None, None), |i| (values[i], r[i]))
                    })
                    .collect(),
            );
        }
    }
    out.push('\n');
    out.push_str(&sep);
    out.push('\n');
    for (row, name) in names.iter().enumerate() {
        let _ = write!(out, "| {name} |");
        for col in &cells {
            let (v, r) = col[row];
            let v = v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            let r = r.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
            let _ = write!(out, " {v} | {r} |");
        }
        out.push('\n');
    }
    out
}

pub fn render_markdown(report: &Report) -> String {
    let mut out = String::from("# Evaluation report\n");
    for run in &report.runs {
        let _ = write!(
            out,
            "\n## {} ({})\n\nOrdered by {}.\n\n",
            run.summary.mechanism.label(),
            run.source.display(),
            run.summary.rank_by
        );
        out.push_str(&ranking_table(&run.summary));
        if !run.summary.errors.is_empty() {
            let _ = writeln!(out, "\n{} sequence(s) failed:\n", run.summary.errors.len());
            for e in &run.summary.errors {
                let _ = writeln!(out, "- {e}");
            }
        }
    }
    if report.runs.len() > 1 {
        out.push_str("\n## Combined\n\n");
        out.push_str(&combined_table(&report.runs));
    }
    out.push_str("\n## Curve files\n\n");
    for run in &report.runs {
        for c in &run.curves {
            let _ = writeln!(out, "- {}/{c}", run.source.display());
        }
    }
    out
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let inputs = cfg.inputs.clone().unwrap_or_default();
    if inputs.is_empty() {
        bail!("no evaluation directories given");
    }
    let inputs = inputs.iter().map(|p| absolute(p)).collect::<Result<Vec<_>>>()?;
    let runs = inputs.iter().map(|p| load_run(p)).collect::<Result<Vec<_>>>()?;
    let report = Report { runs };
    write_json(&out.join("report.json"), &report)?;
    write_file(&out.join("report.md"), &render_markdown(&report))?;
    RunConfig {
        command: Some("report".into()),
        version: Some(env!("CARGO_PKG_VERSION").into()),
        inputs: Some(inputs),
        ..Default::default()
    }
    .write_manifest(out)?;
    Ok(Outcome::default())
}
