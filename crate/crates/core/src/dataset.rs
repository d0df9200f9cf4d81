//! On-disk formats: ground-truth and result tracks, flag files, restart
//! schedules, attribute CSVs, and the sequence directory layout.
//!
//! A sequence directory looks like
//!
//! ```text
//! <sequence>/
//!   frames/          000001.jpg, 000002.jpg, ... (numeric order)
//!   groundtruth.txt  x,y,w,h per line; blank or NaN,NaN,NaN,NaN when absent
//!   absent.txt       optional flag file
//!   shotcut.txt      optional flag file
//!   occlusion.txt    optional flag file
//!   restart.txt      optional restart frames, one 1-based index per line
//!   meta.json        optional {"width": W, "height": H}
//! ```
//!
//! Flag files hold either one `0`/`1` per frame or a list of 1-based frame
//! indices. All frame indices in files are 1-based.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeFlags, AttributeIndices, AttributeVector, ManualFlags};
use crate::geometry::{BoundingBox, FrameSize};

pub const ATTRIBUTE_CSV_HEADER: &str = "frame,IA,SC,IO,IE,IV,BV,SS,SV,SR,RV,FM,CC,i,di,v,dv,s,ds,r,dr,d,p";

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "ppm", "pnm"];

/// A parse failure at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: invalid meta.json: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("sequence {id} failed validation:\n{report}")]
    Invalid { id: String, report: ValidationReport },
}

/// One issue found while validating a sequence; `frame` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub frame: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(k) => write!(f, "frame {k}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, frame: Option<usize>, message: impl Into<String>) {
        self.errors.push(Issue {
            frame,
            message: message.into(),
        });
    }

    fn warn(&mut self, frame: Option<usize>, message: impl Into<String>) {
        self.warnings.push(Issue {
            frame,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "  error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

/// Ground truth and annotation flags of one video.
///
/// Per-frame vectors are 0-based; `restart_schedule` holds 1-based frame
/// indices in strictly increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub frame_paths: Vec<PathBuf>,
    pub gt: Vec<Option<BoundingBox>>,
    pub absent: Vec<bool>,
    pub shotcut: Vec<bool>,
    pub occluded: Vec<bool>,
    pub restart_schedule: Vec<usize>,
    pub frame_size: FrameSize,
}

impl SequenceRecord {
    /// Record with flags derived from `gt` (absent where no box), no shot
    /// cuts, no occlusion, an empty schedule and synthetic frame paths.
    pub fn from_track(id: impl Into<String>, gt: Vec<Option<BoundingBox>>, frame_size: FrameSize) -> Self {
        let n = gt.len();
        Self {
            id: id.into(),
            frame_paths: (1..=n)
                .map(|k| PathBuf::from(format!("frames/{k:06}.jpg")))
                .collect(),
            absent: gt.iter().map(Option::is_none).collect(),
            gt,
            shotcut: vec![false; n],
            occluded: vec![false; n],
            restart_schedule: Vec::new(),
            frame_size,
        }
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    /// Ground truth of 1-based frame `index`.
    pub fn gt_at(&self, index: usize) -> Option<BoundingBox> {
        index
            .checked_sub(1)
            .and_then(|k| self.gt.get(k).copied().flatten())
    }

    /// Manual flags of 0-based frame `k`.
    pub fn manual_flags(&self, k: usize) -> ManualFlags {
        ManualFlags {
            absent: self.absent[k],
            shotcut: self.shotcut[k],
            occluded: self.occluded[k],
        }
    }
}

/// A tracker's output for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTrack {
    pub sequence_id: String,
    pub boxes: Vec<Option<BoundingBox>>,
    pub scores: Vec<Option<f64>>,
}

impl ResultTrack {
    pub fn from_boxes(sequence_id: impl Into<String>, boxes: Vec<Option<BoundingBox>>) -> Self {
        let scores = vec![None; boxes.len()];
        Self {
            sequence_id: sequence_id.into(),
            boxes,
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Splits text into lines; a single trailing newline does not start a new
/// line and `\r` before `\n` is dropped.
fn split_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn parse_number(field: &str, line: usize) -> Result<f64, ParseError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| ParseError::new(line, format!("'{}' is not a number", field.trim())))
}

/// Parses one `x,y,w,h[,score]` line. `Ok(None)` marks an absent frame.
fn parse_box_line(
    line: &str,
    lineno: usize,
    allow_score: bool,
) -> Result<Option<(BoundingBox, Option<f64>)>, ParseError> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split(',').collect();
    let max = if allow_score { 5 } else { 4 };
    if fields.len() < 4 || fields.len() > max {
        return Err(ParseError::new(
            lineno,
            format!(
                "expected {} comma-separated fields, found {}",
                if allow_score { "4 or 5" } else { "4" },
                fields.len()
            ),
        ));
    }
    let coords = fields[..4]
        .iter()
        .map(|f| parse_number(f, lineno))
        .collect::<Result<Vec<_>, _>>()?;
    let score = match fields.get(4) {
        Some(f) if !f.trim().is_empty() => Some(parse_number(f, lineno)?),
        _ => None,
    };
    if coords.iter().all(|v| v.is_nan()) {
        return Ok(None);
    }
    let b = BoundingBox::try_new(coords[0], coords[1], coords[2], coords[3])
        .map_err(|e| ParseError::new(lineno, e.to_string()))?;
    Ok(Some((b, score)))
}

/// Parses a ground-truth track: one line per frame.
pub fn parse_groundtruth(text: &str) -> Result<Vec<Option<BoundingBox>>, ParseError> {
    split_lines(text)
        .map(|(n, l)| parse_box_line(l, n, false).map(|o| o.map(|(b, _)| b)))
        .collect()
}

/// Parses a tracker result file. Returns the track and any warnings.
pub fn parse_results(sequence_id: &str, text: &str) -> Result<(ResultTrack, Vec<String>), ParseError> {
    let mut boxes = Vec::new();
    let mut scores = Vec::new();
    let mut warnings = Vec::new();
    for (n, l) in split_lines(text) {
        match parse_box_line(l, n, true)? {
            Some((b, score)) => {
                let score = score.map(|s| {
                    if !(0.0..=1.0).contains(&s) {
                        warnings.push(format!("line {n}: confidence {s} outside [0,1], clamped"));
                        if s.is_nan() {
                            0.0
                        } else {
                            s.clamp(0.0, 1.0)
                        }
                    } else {
                        s
                    }
                });
                boxes.push(Some(b));
                scores.push(score);
            }
            None => {
                boxes.push(None);
                scores.push(None);
            }
        }
    }
    Ok((
        ResultTrack {
            sequence_id: sequence_id.to_string(),
            boxes,
            scores,
        },
        warnings,
    ))
}

fn format_box(b: &BoundingBox) -> String {
    format!("{},{},{},{}", b.x, b.y, b.w, b.h)
}

/// Writes a track in the ground-truth grammar; absent frames become `NaN,NaN,NaN,NaN`.
pub fn write_track(boxes: &[Option<BoundingBox>]) -> String {
    let mut out = String::new();
    for b in boxes {
        match b {
            Some(b) => out.push_str(&format_box(b)),
            None => out.push_str("NaN,NaN,NaN,NaN"),
        }
        out.push('\n');
    }
    out
}

pub fn write_results(track: &ResultTrack) -> String {
    let mut out = String::new();
    for (b, s) in track.boxes.iter().zip(&track.scores) {
        match (b, s) {
            (Some(b), Some(s)) => out.push_str(&format!("{},{s}", format_box(b))),
            (Some(b), None) => out.push_str(&format_box(b)),
            (None, _) => out.push_str("NaN,NaN,NaN,NaN"),
        }
        out.push('\n');
    }
    out
}

/// Parses a list of 1-based frame indices, one per line; blank lines are ignored.
pub fn parse_index_list(text: &str) -> Result<Vec<(usize, usize)>, ParseError> {
    split_lines(text)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse::<usize>()
                .map(|k| (n, k))
                .map_err(|_| ParseError::new(n, format!("'{}' is not a frame index", l.trim())))
        })
        .collect()
}

/// Parses a flag file: either one `0`/`1` per frame, or a list of 1-based
/// frame indices. A file with exactly `frame_count` lines, all `0` or `1`,
/// is read as a per-frame mask.
pub fn parse_flags(text: &str, frame_count: usize) -> Result<Vec<bool>, ParseError> {
    let entries = parse_index_list(text)?;
    let binary = entries.iter().all(|&(_, k)| k <= 1);
    if binary && entries.len() == frame_count {
        return Ok(entries.iter().map(|&(_, k)| k == 1).collect());
    }
    if binary && entries.iter().any(|&(_, k)| k == 0) {
        return Err(ParseError::new(
            entries.last().map_or(1, |e| e.0),
            format!(
                "flag mask has {} entries for {} frames",
                entries.len(),
                frame_count
            ),
        ));
    }
    let mut flags = vec![false; frame_count];
    for (line, k) in entries {
        if k == 0 || k > frame_count {
            return Err(ParseError::new(
                line,
                format!("frame index {k} out of range 1..={frame_count}"),
            ));
        }
        flags[k - 1] = true;
    }
    Ok(flags)
}

/// Parses restart frames (1-based), deduplicated and sorted, each checked
/// against the record's ground truth.
pub fn parse_restart_schedule(text: &str, record: &SequenceRecord) -> Result<Vec<usize>, ParseError> {
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for (line, k) in parse_index_list(text)? {
        if k == 0 || k > record.len() {
            return Err(ParseError::new(
                line,
                format!("restart frame {k} out of range 1..={}", record.len()),
            ));
        }
        if record.gt_at(k).is_none() {
            return Err(ParseError::new(
                line,
                format!("restart frame {k} has no ground truth"),
            ));
        }
        seen.push((k, line));
    }
    let mut schedule: Vec<usize> = seen.into_iter().map(|(k, _)| k).collect();
    schedule.sort_unstable();
    schedule.dedup();
    Ok(schedule)
}

/// Checks every record invariant. Boxes leaving the frame are warnings.
pub fn validate_sequence(record: &SequenceRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = record.gt.len();
    if n == 0 {
        report.error(None, "sequence has no frames");
        return report;
    }
    for (name, len) in [
        ("frame_paths", record.frame_paths.len()),
        ("absent", record.absent.len()),
        ("shotcut", record.shotcut.len()),
        ("occluded", record.occluded.len()),
    ] {
        if len != n {
            report.error(None, format!("{name} has {len} entries for {n} frames"));
        }
    }
    if !report.is_ok() {
        return report;
    }
    if record.gt[0].is_none() {
        report.error(Some(1), "initialization frame has no ground truth");
    }
    let (w, h) = (
        f64::from(record.frame_size.width),
        f64::from(record.frame_size.height),
    );
    for (k, (b, &absent)) in record.gt.iter().zip(&record.absent).enumerate() {
        let frame = Some(k + 1);
        match (b, absent) {
            (Some(_), true) => report.error(frame, "ground truth present on an absent frame"),
            (None, false) => report.error(frame, "ground truth missing on a present frame"),
            _ => {}
        }
        if let Some(b) = b {
            if let Err(e) = b.validate() {
                report.error(frame, e.to_string());
            } else if b.x < 0.0 || b.y < 0.0 || b.right() > w || b.bottom() > h {
                report.warn(frame, "box extends past the frame bounds");
            }
        }
    }
    let mut last = 0usize;
    for &k in &record.restart_schedule {
        if k <= last {
            report.error(Some(k), "restart schedule is not strictly increasing");
        }
        if k == 0 || k > n {
            report.error(Some(k), "restart frame out of range");
        } else if record.gt[k - 1].is_none() {
            report.error(Some(k), "restart frame has no ground truth");
        }
        last = k;
    }
    report
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>, DatasetError> {
    if path.is_file() {
        read_text(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Image files in `dir`, ordered by the numeric value of their stem.
pub fn discover_frames(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !path.is_file() || !is_image {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        match stem.parse::<u64>() {
            Ok(num) => frames.push((num, path)),
            Err(_) => log::warn!("ignoring non-numeric frame file {}", path.display()),
        }
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Sequence directories under `root` (those holding a `groundtruth.txt`), sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if root.join("groundtruth.txt").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let io_err = |source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.join("groundtruth.txt").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads and validates a sequence directory.
pub fn load_sequence(dir: &Path) -> Result<SequenceRecord, DatasetError> {
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let invalid = |report: ValidationReport| DatasetError::Invalid {
        id: id.clone(),
        report,
    };
    let mut report = ValidationReport::default();

    let frames_dir = dir.join("frames");
    if !frames_dir.is_dir() {
        report.error(None, "missing frames/ directory");
        return Err(invalid(report));
    }
    let frame_paths = discover_frames(&frames_dir)?;

    let gt_path = dir.join("groundtruth.txt");
    let gt = parse_groundtruth(&read_text(&gt_path)?).map_err(|source| DatasetError::Parse {
        path: gt_path.clone(),
        source,
    })?;
    let n = gt.len();
    if frame_paths.len() != n {
        report.error(
            None,
            format!("{} frames but {} ground-truth lines", frame_paths.len(), n),
        );
        return Err(invalid(report));
    }

    let frame_size = match read_optional(&dir.join("meta.json"))? {
        Some(text) => {
            let size: FrameSize = serde_json::from_str(&text).map_err(|source| DatasetError::Meta {
                path: dir.join("meta.json"),
                source,
            })?;
            FrameSize::new(size.width, size.height).ok()
        }
        None => frame_paths
            .first()
            .and_then(|p| image::image_dimensions(p).ok())
            .and_then(|(w, h)| FrameSize::new(w, h).ok()),
    };
    let Some(frame_size) = frame_size else {
        report.error(None, "frame size unavailable: add meta.json or decodable frames");
        return Err(invalid(report));
    };

    let mut flag_file = |name: &str| -> Result<Option<Vec<bool>>, DatasetError> {
        let path = dir.join(name);
        match read_optional(&path)? {
            Some(text) => match parse_flags(&text, n) {
                Ok(f) => Ok(Some(f)),
                Err(e) => {
                    report.error(None, format!("{name}: {e}"));
                    Ok(None)
                }
            },
            None => Ok(None),
        }
    };
    let absent = flag_file("absent.txt")?;
    let shotcut = flag_file("shotcut.txt")?.unwrap_or_else(|| vec![false; n]);
    let occluded = flag_file("occlusion.txt")?.unwrap_or_else(|| vec![false; n]);
    let absent = absent.unwrap_or_else(|| gt.iter().map(Option::is_none).collect());

    let mut record = SequenceRecord {
        id: id.clone(),
        frame_paths,
        gt,
        absent,
        shotcut,
        occluded,
        restart_schedule: Vec::new(),
        frame_size,
    };
    if let Some(text) = read_optional(&dir.join("restart.txt"))? {
        match parse_restart_schedule(&text, &record) {
            Ok(s) => record.restart_schedule = s,
            Err(e) => report.error(None, format!("restart.txt: {e}")),
        }
    }

    let check = validate_sequence(&record);
    report.errors.extend(check.errors);
    report.warnings.extend(check.warnings);
    if !report.is_ok() {
        return Err(invalid(report));
    }
    for w in &report.warnings {
        log::warn!("{id}: {w}");
    }
    Ok(record)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Attribute CSV, one row per frame with 1-based frame numbers.
pub fn write_attributes_csv(attrs: &[AttributeVector]) -> String {
    let mut out = String::from(ATTRIBUTE_CSV_HEADER);
    out.push('\n');
    for (k, a) in attrs.iter().enumerate() {
        let f = &a.flags;
        let flags = [
            f.ia, f.sc, f.io, f.ie, f.iv, f.bv, f.ss, f.sv, f.sr, f.rv, f.fm, f.cc,
        ];
        let ix = &a.indices;
        let indices = [ix.i, ix.di, ix.v, ix.dv, ix.s, ix.ds, ix.r, ix.dr, ix.d, ix.p];
        let row: Vec<String> = std::iter::once((k + 1).to_string())
            .chain(flags.iter().map(|&b| u8::from(b).to_string()))
            .chain(indices.iter().map(|&v| fmt_opt(v)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Reads back a file produced by [`write_attributes_csv`].
pub fn parse_attributes_csv(text: &str) -> Result<Vec<AttributeVector>, ParseError> {
    let mut lines = split_lines(text);
    match lines.next() {
        Some((_, h)) if h.trim() == ATTRIBUTE_CSV_HEADER => {}
        _ => return Err(ParseError::new(1, "missing attribute CSV header")),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 23 {
            return Err(ParseError::new(
                n,
                format!("expected 23 fields, found {}", fields.len()),
            ));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| ParseError::new(n, "bad frame number"))?;
        if frame != out.len() + 1 {
            return Err(ParseError::new(
                n,
                format!("expected frame {}, found {frame}", out.len() + 1),
            ));
        }
        let mut flags = [false; 12];
        for (slot, f) in flags.iter_mut().zip(&fields[1..13]) {
            *slot = match *f {
                "0" => false,
                "1" => true,
                other => return Err(ParseError::new(n, format!("flag '{other}' is not 0 or 1"))),
            };
        }
        let mut idx = [None; 10];
        for (slot, f) in idx.iter_mut().zip(&fields[13..]) {
            if !f.is_empty() {
                *slot = Some(parse_number(f, n)?);
            }
        }
        let [ia, sc, io, ie, iv, bv, ss, sv, sr, rv, fm, cc] = flags;
        let [i, di, v, dv, s, ds, r, dr, d, p] = idx;
        out.push(AttributeVector {
            flags: AttributeFlags {
                ia,
                sc,
                io,
                ie,
                iv,
                bv,
                ss,
                sv,
                sr,
                rv,
                fm,
                cc,
            },
            indices: AttributeIndices {
                i,
                di,
                v,
                dv,
                s,
                ds,
                r,
                dr,
                d,
                p,
            },
            correction: None,
        });
    }
    Ok(out)
}
