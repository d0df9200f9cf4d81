//! The twelve per-frame challenge attributes.
//!
//! Three of them (IA, SC, IO) are manual flags copied from the annotation.
//! The rest are derived from image statistics and box geometry:
//!
//! | flag | index | predicate |
//! |------|-------|-----------|
//! | IE | `i`, illumination cosine (Shade of Gray gains vs. `[1,1,1]`) | `i < illum_special` |
//! | IV | `Δi` | `Δi > illum_delta` |
//! | BV | `Δv`, change of Laplacian variance | `Δv > blur_delta` |
//! | SS | `s = sqrt(w h)` | `s ∉ [scale_low, scale_high]` |
//! | SV | `Δs` | `Δs > scale_delta` |
//! | SR | `r = h / w` | `r ∉ [ratio_low, ratio_high]` |
//! | RV | `Δr` | `Δr > ratio_delta` |
//! | FM | `d`, center displacement over `sqrt(s_prev s_cur)` | `d > motion_fast` |
//! | CC | `p`, Pearson correlation of consecutive gray frames | `p > corr_strong` |
//!
//! Pairwise indices are only computed between two present frames of the same
//! shot; the first frame of a sequence, absent frames and shot-cut frames
//! leave them missing and their flags unset.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SequenceRecord;
use crate::geometry::{center, BoundingBox};

/// Smallest illuminant estimate allowed before taking reciprocals.
pub const MIN_ILLUMINANT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("frame is empty")]
    EmptyFrame,
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("frame {width}x{height} is smaller than the 3x3 Laplacian kernel")]
    FrameTooSmall { width: u32, height: u32 },
    #[error("buffers differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("correlation undefined: buffer has zero variance")]
    ZeroVariance,
    #[error("box presence does not match the absent flag")]
    BoxFlagMismatch,
    #[error("frame count {frames} does not match annotation count {annotations}")]
    LengthMismatch { frames: usize, annotations: usize },
    #[error("failed to decode frame {index} ({path}): {source}")]
    Decode {
        index: usize,
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("frame {index}: {source}")]
    AtFrame {
        index: usize,
        #[source]
        source: Box<AttributeError>,
    },
}

/// Row-major 8-bit RGB frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, AttributeError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(AttributeError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Frame whose pixel `(x, y)` is `f(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

impl From<image::RgbImage> for FrameBuffer {
    fn from(img: image::RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            pixels: img.into_raw(),
        }
    }
}

/// Row-major luminance plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayBuffer {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl GrayBuffer {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, AttributeError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(AttributeError::BufferSize {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width as usize + x]
    }
}

/// Attribute thresholds. Any subset may be overridden from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub illum_special: f64,
    pub illum_delta: f64,
    pub blur_low: f64,
    pub blur_delta: f64,
    pub scale_low: f64,
    pub scale_high: f64,
    pub scale_delta: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub ratio_delta: f64,
    pub motion_fast: f64,
    pub corr_strong: f64,
    pub gamma: f64,
    pub minkowski_power: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            illum_special: 0.99,
            illum_delta: 0.0001,
            blur_low: 100.0,
            blur_delta: 1.5,
            scale_low: 50.0,
            scale_high: 750.0,
            scale_delta: 30.0,
            ratio_low: 1.0 / 3.0,
            ratio_high: 3.0,
            ratio_delta: 0.2,
            motion_fast: 0.2,
            corr_strong: 0.8,
            gamma: 2.2,
            minkowski_power: 6.0,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("illum_special", self.illum_special),
            ("illum_delta", self.illum_delta),
            ("blur_low", self.blur_low),
            ("blur_delta", self.blur_delta),
            ("scale_low", self.scale_low),
            ("scale_high", self.scale_high),
            ("scale_delta", self.scale_delta),
            ("ratio_low", self.ratio_low),
            ("ratio_high", self.ratio_high),
            ("ratio_delta", self.ratio_delta),
            ("motion_fast", self.motion_fast),
            ("corr_strong", self.corr_strong),
            ("gamma", self.gamma),
            ("minkowski_power", self.minkowski_power),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("threshold {name} must be positive, got {v}"));
        }
        if self.scale_low >= self.scale_high {
            return Err("scale_low must be below scale_high".into());
        }
        if self.ratio_low >= self.ratio_high {
            return Err("ratio_low must be below ratio_high".into());
        }
        Ok(())
    }

    /// Sharpness regime: frames whose Laplacian variance is below `blur_low`.
    pub fn is_blurry(&self, v: f64) -> bool {
        v < self.blur_low
    }

    /// Derives every flag from the indices and the manual flags.
    pub fn flags(&self, idx: &AttributeIndices, manual: ManualFlags) -> AttributeFlags {
        let above = |v: Option<f64>, t: f64| v.is_some_and(|v| v > t);
        AttributeFlags {
            ia: manual.absent,
            sc: manual.shotcut,
            io: manual.occluded,
            ie: idx.i.is_some_and(|i| i < self.illum_special),
            iv: above(idx.di, self.illum_delta),
            bv: above(idx.dv, self.blur_delta),
            ss: idx.s.is_some_and(|s| s < self.scale_low || s > self.scale_high),
            sv: above(idx.ds, self.scale_delta),
            sr: idx.r.is_some_and(|r| r < self.ratio_low || r > self.ratio_high),
            rv: above(idx.dr, self.ratio_delta),
            fm: above(idx.d, self.motion_fast),
            cc: above(idx.p, self.corr_strong),
        }
    }
}

/// One of the twelve challenge attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Attribute {
    Ia,
    Sc,
    Io,
    Ie,
    Iv,
    Bv,
    Ss,
    Sv,
    Sr,
    Rv,
    Fm,
    Cc,
}

impl Attribute {
    pub const ALL: [Attribute; 12] = [
        Attribute::Ia,
        Attribute::Sc,
        Attribute::Io,
        Attribute::Ie,
        Attribute::Iv,
        Attribute::Bv,
        Attribute::Ss,
        Attribute::Sv,
        Attribute::Sr,
        Attribute::Rv,
        Attribute::Fm,
        Attribute::Cc,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Attribute::Ia => "IA",
            Attribute::Sc => "SC",
            Attribute::Io => "IO",
            Attribute::Ie => "IE",
            Attribute::Iv => "IV",
            Attribute::Bv => "BV",
            Attribute::Ss => "SS",
            Attribute::Sv => "SV",
            Attribute::Sr => "SR",
            Attribute::Rv => "RV",
            Attribute::Fm => "FM",
            Attribute::Cc => "CC",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown attribute '{s}'"))
    }
}

/// Annotator-provided flags of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManualFlags {
    pub absent: bool,
    pub shotcut: bool,
    pub occluded: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeFlags {
    pub ia: bool,
    pub sc: bool,
    pub io: bool,
    pub ie: bool,
    pub iv: bool,
    pub bv: bool,
    pub ss: bool,
    pub sv: bool,
    pub sr: bool,
    pub rv: bool,
    pub fm: bool,
    pub cc: bool,
}

impl AttributeFlags {
    pub fn get(&self, a: Attribute) -> bool {
        match a {
            Attribute::Ia => self.ia,
            Attribute::Sc => self.sc,
            Attribute::Io => self.io,
            Attribute::Ie => self.ie,
            Attribute::Iv => self.iv,
            Attribute::Bv => self.bv,
            Attribute::Ss => self.ss,
            Attribute::Sv => self.sv,
            Attribute::Sr => self.sr,
            Attribute::Rv => self.rv,
            Attribute::Fm => self.fm,
            Attribute::Cc => self.cc,
        }
    }

    pub fn manual(&self) -> ManualFlags {
        ManualFlags {
            absent: self.ia,
            shotcut: self.sc,
            occluded: self.io,
        }
    }
}

/// Continuous indices behind the flags; `None` where not computable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeIndices {
    pub i: Option<f64>,
    pub di: Option<f64>,
    pub v: Option<f64>,
    pub dv: Option<f64>,
    pub s: Option<f64>,
    pub ds: Option<f64>,
    pub r: Option<f64>,
    pub dr: Option<f64>,
    pub d: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub flags: AttributeFlags,
    pub indices: AttributeIndices,
    /// Shade of Gray channel gains of the frame, when computed from pixels.
    pub correction: Option<[f64; 3]>,
}

impl AttributeVector {
    pub fn flag(&self, a: Attribute) -> bool {
        self.flags.get(a)
    }
}

pub fn to_grayscale(f: &FrameBuffer) -> GrayBuffer {
    let values = f
        .pixels
        .chunks_exact(3)
        .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
        .collect();
    GrayBuffer {
        width: f.width,
        height: f.height,
        values,
    }
}

/// Shade of Gray estimate of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    /// Per-channel gains mapping the scene illuminant to neutral.
    pub gains: [f64; 3],
    /// Cosine similarity of `gains` with `[1, 1, 1]`.
    pub cosine: f64,
}

pub fn illumination_estimate(f: &FrameBuffer, t: &ThresholdConfig) -> Result<Illumination, AttributeError> {
    if f.is_empty() {
        return Err(AttributeError::EmptyFrame);
    }
    // Linearized intensity of every 8-bit level raised to the Minkowski power.
    let lut: Vec<f64> = (0..=255u32)
        .map(|v| (f64::from(v) / 255.0).powf(t.gamma).powf(t.minkowski_power))
        .collect();
    let mut sums = [0.0f64; 3];
    for px in f.pixels.chunks_exact(3) {
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum += lut[px[c] as usize];
        }
    }
    let n = (f.pixels.len() / 3) as f64;
    let mut illuminant = [0.0f64; 3];
    for (c, e) in illuminant.iter_mut().enumerate() {
        let est = (sums[c] / n).powf(1.0 / t.minkowski_power);
        *e = if est < MIN_ILLUMINANT {
            log::warn!("illuminant estimate of channel {c} is {est:e}; clamped to {MIN_ILLUMINANT:e}");
            MIN_ILLUMINANT
        } else {
            est
        };
    }
    let mean = illuminant.iter().sum::<f64>() / 3.0;
    let gains = illuminant.map(|e| mean / e);
    Ok(Illumination {
        gains,
        cosine: cosine_to_neutral(gains),
    })
}

/// Cosine similarity between `c` and `[1, 1, 1]`.
pub fn cosine_to_neutral(c: [f64; 3]) -> f64 {
    let dot: f64 = c.iter().sum();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt() * 3f64.sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (dot / norm).clamp(-1.0, 1.0)
}

/// Population variance of the 4-neighbour Laplacian response over the
/// interior (unpadded) region.
pub fn laplacian_variance(g: &GrayBuffer) -> Result<f64, AttributeError> {
    if g.width < 3 || g.height < 3 {
        return Err(AttributeError::FrameTooSmall {
            width: g.width,
            height: g.height,
        });
    }
    let (w, h) = (g.width as usize, g.height as usize);
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = g.at(x, y - 1) + g.at(x - 1, y) + g.at(x + 1, y) + g.at(x, y + 1) - 4.0 * g.at(x, y);
            responses.push(r);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    Ok(responses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n)
}

/// Pearson correlation of two equally sized buffers.
pub fn ppmcc(a: &GrayBuffer, b: &GrayBuffer) -> Result<f64, AttributeError> {
    if a.width != b.width || a.height != b.height {
        return Err(AttributeError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    if a.values.is_empty() {
        return Err(AttributeError::EmptyFrame);
    }
    let n = a.values.len() as f64;
    let mean_a = a.values.iter().sum::<f64>() / n;
    let mean_b = b.values.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (da, db) = (x - mean_a, y - mean_b);
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(AttributeError::ZeroVariance);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

pub fn box_scale(b: &BoundingBox) -> f64 {
    (b.w * b.h).sqrt()
}

pub fn box_ratio(b: &BoundingBox) -> f64 {
    b.h / b.w
}

/// Center displacement between two boxes over the geometric mean of their scales.
pub fn motion_index(prev: &BoundingBox, cur: &BoundingBox) -> f64 {
    let scale = (box_scale(prev) * box_scale(cur)).sqrt();
    center(prev).distance(center(cur)) / scale
}

/// The preceding frame of the same sequence.
#[derive(Debug, Clone, Copy)]
pub struct PreviousFrame<'a> {
    pub frame: &'a FrameBuffer,
    pub bbox: Option<BoundingBox>,
    pub attrs: &'a AttributeVector,
}

/// Attributes of one frame given its predecessor (if any).
pub fn frame_attributes(
    prev: Option<PreviousFrame<'_>>,
    cur_frame: &FrameBuffer,
    cur_box: Option<BoundingBox>,
    flags: ManualFlags,
    t: &ThresholdConfig,
) -> Result<AttributeVector, AttributeError> {
    let cur_gray = to_grayscale(cur_frame);
    let prev = prev.map(|p| (p, to_grayscale(p.frame)));
    attributes_with_gray(
        prev.as_ref().map(|(p, g)| (p.bbox, p.attrs, g)),
        cur_frame,
        &cur_gray,
        cur_box,
        flags,
        t,
    )
}

fn attributes_with_gray(
    prev: Option<(Option<BoundingBox>, &AttributeVector, &GrayBuffer)>,
    cur_frame: &FrameBuffer,
    cur_gray: &GrayBuffer,
    cur_box: Option<BoundingBox>,
    flags: ManualFlags,
    t: &ThresholdConfig,
) -> Result<AttributeVector, AttributeError> {
    if cur_box.is_some() == flags.absent {
        return Err(AttributeError::BoxFlagMismatch);
    }
    let illum = illumination_estimate(cur_frame, t)?;
    let mut idx = AttributeIndices {
        i: Some(illum.cosine),
        v: Some(laplacian_variance(cur_gray)?),
        s: cur_box.as_ref().map(box_scale),
        r: cur_box.as_ref().map(box_ratio),
        ..Default::default()
    };

    let pair = prev.filter(|(_, attrs, _)| !attrs.flags.ia && !flags.absent && !flags.shotcut);
    if let Some((prev_box, prev_attrs, prev_gray)) = pair {
        let delta = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b).abs());
        let pi = &prev_attrs.indices;
        idx.di = delta(idx.i, pi.i);
        idx.dv = delta(idx.v, pi.v);
        idx.ds = delta(idx.s, pi.s);
        idx.dr = delta(idx.r, pi.r);
        idx.d = prev_box.zip(cur_box).map(|(p, c)| motion_index(&p, &c));
        idx.p = match ppmcc(prev_gray, cur_gray) {
            Ok(p) => Some(p),
            Err(AttributeError::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
    }

    Ok(AttributeVector {
        flags: t.flags(&idx, flags),
        indices: idx,
        correction: Some(illum.gains),
    })
}

/// Random access to the decoded frames of one sequence.
pub trait FrameSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decodes frame `index` (0-based).
    fn frame(&mut self, index: usize) -> Result<FrameBuffer, AttributeError>;
}

impl FrameSource for Vec<FrameBuffer> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn frame(&mut self, index: usize) -> Result<FrameBuffer, AttributeError> {
        Ok(self[index].clone())
    }
}

/// Frames decoded from image files (PNG, JPEG, PPM) on demand.
#[derive(Debug, Clone)]
pub struct ImageFrames {
    paths: Vec<PathBuf>,
}

impl ImageFrames {
    pub fn new(paths: Vec<PathBuf>) -> Self {
        Self { paths }
    }
}

impl FrameSource for ImageFrames {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn frame(&mut self, index: usize) -> Result<FrameBuffer, AttributeError> {
        let path = &self.paths[index];
        let img = image::open(path).map_err(|source| AttributeError::Decode {
            index: index + 1,
            path: path.clone(),
            source,
        })?;
        Ok(img.to_rgb8().into())
    }
}

/// Attribute vectors of a whole sequence, streaming over the frames.
pub fn sequence_attributes(
    frames: &mut dyn FrameSource,
    record: &SequenceRecord,
    t: &ThresholdConfig,
) -> Result<Vec<AttributeVector>, AttributeError> {
    let n = record.len();
    if frames.len() != n {
        return Err(AttributeError::LengthMismatch {
            frames: frames.len(),
            annotations: n,
        });
    }
    let mut out: Vec<AttributeVector> = Vec::with_capacity(n);
    let mut prev: Option<(FrameBuffer, GrayBuffer)> = None;
    for k in 0..n {
        let at = |e: AttributeError| match e {
            e @ AttributeError::Decode { .. } => e,
            e => AttributeError::AtFrame {
                index: k + 1,
                source: Box::new(e),
            },
        };
        let frame = frames.frame(k).map_err(at)?;
        let gray = to_grayscale(&frame);
        let manual = record.manual_flags(k);
        let attrs = attributes_with_gray(
            prev.as_ref().map(|(_, g)| (record.gt[k - 1], &out[k - 1], g)),
            &frame,
            &gray,
            record.gt[k],
            manual,
            t,
        )
        .map_err(at)?;
        out.push(attrs);
        prev = Some((frame, gray));
    }
    Ok(out)
}

/// Mean of the defined inter-frame correlations `p`.
pub fn mean_correlation(attrs: &[AttributeVector]) -> Option<f64> {
    let ps: Vec<f64> = attrs.iter().filter_map(|a| a.indices.p).collect();
    if ps.is_empty() {
        None
    } else {
        Some(ps.iter().sum::<f64>() / ps.len() as f64)
    }
}
