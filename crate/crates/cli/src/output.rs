//! Writing report files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use giteval::metrics::EvaluationCurve;
use serde::Serialize;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

/// One `<METRIC>.csv` per curve inside `dir`.
pub fn write_curves(dir: &Path, curves: &[EvaluationCurve]) -> Result<()> {
    for c in curves {
        write_file(&dir.join(format!("{}.csv", c.metric)), &c.to_csv())?;
    }
    Ok(())
}

/// File-name-safe form of an identifier.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}
