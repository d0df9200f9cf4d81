//! Per-frame scores, threshold curves, attribute breakdowns, aggregation and
//! the restart-based robustness score.
//!
//! Curve grids are fixed:
//!
//! | metric | grid | value at threshold `t` |
//! |---|---|---|
//! | `PRE` | 0, 1, ..., 50 px | fraction with center distance `<= t` |
//! | `NPRE` | 101 points over [0, 1] | fraction with N-PRE value `<= t` |
//! | `SR_IOU` | 101 points over [0, 1] | fraction with IoU `>= t` |
//! | `SR_GIOU`, `SR_DIOU` | 101 points over [-1, 1] | fraction with score `>= t` |
//!
//! AUC is the trapezoidal mean of the curve over its grid, so it lies in
//! `[0, 1]` for every metric. Frames without a prediction score as misses.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{Attribute, AttributeVector};
use crate::dataset::{ResultTrack, SequenceRecord};
use crate::geometry::{center_distance, diou, giou, iou, npre_value, BoundingBox, FrameSize};

/// Center-distance threshold used for ranking by precision.
pub const PRE_RANK_THRESHOLD: f64 = 20.0;
/// Smallest attribute subset that still gets its own curves.
pub const DEFAULT_MIN_ATTRIBUTE_FRAMES: usize = 10;
/// Lower clamp for the per-video correlation in the robustness score.
pub const MIN_RHO: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot build a curve from zero frames")]
    Empty,
    #[error("score {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("result has {result} frames, sequence has {sequence}")]
    LengthMismatch { sequence: usize, result: usize },
    #[error("{len} attribute vectors do not cover frame {frame}")]
    AttributeLength { len: usize, frame: usize },
    #[error("sequence {0}: restart schedule is empty")]
    NoRestartPoints(String),
    #[error("sequence {id}: {used} restarts exceed {points} restart points")]
    TooManyRestarts { id: String, used: usize, points: usize },
    #[error("sequence {id}: correlation {rho} outside (0, 1]")]
    BadCorrelation { id: String, rho: f64 },
    #[error("sequence {id}: {source}")]
    Sequence {
        id: String,
        #[source]
        source: Box<MetricsError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "PRE")]
    Pre,
    #[serde(rename = "NPRE")]
    Npre,
    #[serde(rename = "SR_IOU")]
    SrIou,
    #[serde(rename = "SR_GIOU")]
    SrGiou,
    #[serde(rename = "SR_DIOU")]
    SrDiou,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Pre,
        MetricKind::Npre,
        MetricKind::SrIou,
        MetricKind::SrGiou,
        MetricKind::SrDiou,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MetricKind::Pre => "PRE",
            MetricKind::Npre => "NPRE",
            MetricKind::SrIou => "SR_IOU",
            MetricKind::SrGiou => "SR_GIOU",
            MetricKind::SrDiou => "SR_DIOU",
        }
    }

    pub fn grid(self) -> ThresholdGrid {
        match self {
            MetricKind::Pre => ThresholdGrid::new(0.0, 50.0, 51),
            MetricKind::Npre | MetricKind::SrIou => ThresholdGrid::new(0.0, 1.0, 101),
            MetricKind::SrGiou | MetricKind::SrDiou => ThresholdGrid::new(-1.0, 1.0, 101),
        }
    }

    fn score(self, s: &FrameScores) -> f64 {
        match self {
            MetricKind::Pre => s.center_distance,
            MetricKind::Npre => s.npre,
            MetricKind::SrIou => s.iou,
            MetricKind::SrGiou => s.giou,
            MetricKind::SrDiou => s.diou,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl ThresholdGrid {
    pub const fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        let steps = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / steps)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCurve {
    pub metric: MetricKind,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub auc: f64,
    /// `PRE` at 20 px for precision, AUC otherwise.
    pub rank_score: f64,
}

impl EvaluationCurve {
    pub fn value_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-9)
            .map(|k| self.values[k])
    }

    /// `threshold,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,value\n");
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Trapezoidal mean over a uniform grid.
fn trapezoid_mean(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [v] => *v,
        [first, middle @ .., last] => {
            let sum = (first + last) / 2.0 + middle.iter().sum::<f64>();
            (sum / (values.len() - 1) as f64).clamp(0.0, 1.0)
        }
    }
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn fraction_at_most(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&v| v <= t) as f64 / sorted.len() as f64
}

fn fraction_at_least(sorted: &[f64], t: f64) -> f64 {
    (sorted.len() - sorted.partition_point(|&v| v < t)) as f64 / sorted.len() as f64
}

/// Precision plot over center distances in pixels. Misses use `f64::INFINITY`.
pub fn precision_curve(distances: &[f64]) -> Result<EvaluationCurve, MetricsError> {
    if distances.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&v) = distances.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(MetricsError::OutOfRange {
            value: v,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let s = sorted(distances);
    let thresholds = MetricKind::Pre.grid().thresholds();
    let values: Vec<f64> = thresholds.iter().map(|&t| fraction_at_most(&s, t)).collect();
    let auc = trapezoid_mean(&values);
    let rank_score = fraction_at_most(&s, PRE_RANK_THRESHOLD);
    Ok(EvaluationCurve {
        metric: MetricKind::Pre,
        thresholds,
        values,
        auc,
        rank_score,
    })
}

/// Normalized precision plot over per-frame N-PRE values in `[0, 1]`.
pub fn npre_curve(values: &[f64]) -> Result<EvaluationCurve, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MetricsError::OutOfRange {
            value: v,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let s = sorted(values);
    let thresholds = MetricKind::Npre.grid().thresholds();
    let curve: Vec<f64> = thresholds.iter().map(|&t| fraction_at_most(&s, t)).collect();
    let auc = trapezoid_mean(&curve);
    Ok(EvaluationCurve {
        metric: MetricKind::Npre,
        thresholds,
        values: curve,
        auc,
        rank_score: auc,
    })
}

/// Success plot of overlap scores on `range` (`(0, 1)` for IoU, `(-1, 1)`
/// for GIoU and DIoU).
pub fn success_curve(
    metric: MetricKind,
    scores: &[f64],
    range: (f64, f64),
) -> Result<EvaluationCurve, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (lo, hi) = range;
    if let Some(&v) = scores.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(MetricsError::OutOfRange { value: v, lo, hi });
    }
    let s = sorted(scores);
    let thresholds = ThresholdGrid::new(lo, hi, 101).thresholds();
    let values: Vec<f64> = thresholds.iter().map(|&t| fraction_at_least(&s, t)).collect();
    let auc = trapezoid_mean(&values);
    Ok(EvaluationCurve {
        metric,
        thresholds,
        values,
        auc,
        rank_score: auc,
    })
}

/// Scores of one prediction against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    /// Center distance in pixels; infinite for a miss.
    #[serde(with = "infinite_as_null")]
    pub center_distance: f64,
    pub npre: f64,
    pub iou: f64,
    pub giou: f64,
    pub diou: f64,
}

impl FrameScores {
    /// Worst-case scores of a frame without a usable prediction.
    pub const MISS: FrameScores = FrameScores {
        center_distance: f64::INFINITY,
        npre: 1.0,
        iou: 0.0,
        giou: -1.0,
        diou: -1.0,
    };
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Scores `pred` against `gt`. Missing or degenerate predictions are misses.
pub fn score_frame(pred: Option<&BoundingBox>, gt: &BoundingBox, frame: FrameSize) -> FrameScores {
    let Some(pred) = pred.filter(|p| p.is_valid()) else {
        return FrameScores::MISS;
    };
    FrameScores {
        center_distance: center_distance(pred, gt),
        npre: npre_value(pred, gt, frame).unwrap_or(1.0),
        iou: iou(pred, gt),
        giou: giou(pred, gt),
        diou: diou(pred, gt),
    }
}

/// All five curves over a set of frame scores.
pub fn curves_for(scores: &[FrameScores]) -> Result<Vec<EvaluationCurve>, MetricsError> {
    let col = |m: MetricKind| scores.iter().map(|s| m.score(s)).collect::<Vec<f64>>();
    Ok(vec![
        precision_curve(&col(MetricKind::Pre))?,
        npre_curve(&col(MetricKind::Npre))?,
        success_curve(MetricKind::SrIou, &col(MetricKind::SrIou), (0.0, 1.0))?,
        success_curve(MetricKind::SrGiou, &col(MetricKind::SrGiou), (-1.0, 1.0))?,
        success_curve(MetricKind::SrDiou, &col(MetricKind::SrDiou), (-1.0, 1.0))?,
    ])
}

/// Frames that count for evaluation (1-based): every frame except the
/// initialization frame, absent frames and shot-cut frames.
pub fn filter_frames(record: &SequenceRecord) -> Vec<usize> {
    (2..=record.len())
        .filter(|&k| !record.absent[k - 1] && !record.shotcut[k - 1] && record.gt[k - 1].is_some())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvaluation {
    pub sequence_id: String,
    /// 1-based frame indices, aligned with `scores`.
    pub eligible_frames: Vec<usize>,
    pub scores: Vec<FrameScores>,
    pub curves: Vec<EvaluationCurve>,
}

impl SequenceEvaluation {
    pub fn from_scores(
        sequence_id: impl Into<String>,
        eligible_frames: Vec<usize>,
        scores: Vec<FrameScores>,
    ) -> Result<Self, MetricsError> {
        let sequence_id = sequence_id.into();
        let curves = curves_for(&scores).map_err(|e| MetricsError::Sequence {
            id: sequence_id.clone(),
            source: Box::new(e),
        })?;
        Ok(Self {
            sequence_id,
            eligible_frames,
            scores,
            curves,
        })
    }

    pub fn curve(&self, metric: MetricKind) -> &EvaluationCurve {
        self.curves
            .iter()
            .find(|c| c.metric == metric)
            .expect("every evaluation carries all metrics")
    }
}

/// One-pass evaluation of a result track.
pub fn evaluate_ope(
    record: &SequenceRecord,
    result: &ResultTrack,
) -> Result<SequenceEvaluation, MetricsError> {
    if result.len() != record.len() {
        return Err(MetricsError::LengthMismatch {
            sequence: record.len(),
            result: result.len(),
        });
    }
    let frames = filter_frames(record);
    let scores = frames
        .iter()
        .map(|&k| {
            let gt = record.gt[k - 1].expect("eligible frames have ground truth");
            score_frame(result.boxes[k - 1].as_ref(), &gt, record.frame_size)
        })
        .collect();
    SequenceEvaluation::from_scores(record.id.clone(), frames, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBreakdown {
    /// Eligible frames (1-based) carrying the attribute.
    pub frames: Vec<usize>,
    /// `None` when the subset is smaller than the minimum count.
    pub curves: Option<Vec<EvaluationCurve>>,
}

impl AttributeBreakdown {
    pub fn is_sufficient(&self) -> bool {
        self.curves.is_some()
    }
}

/// Recomputes the curves on the eligible frames carrying each attribute.
pub fn attribute_breakdown(
    eval: &SequenceEvaluation,
    attrs: &[AttributeVector],
    selection: &[Attribute],
    min_frames: usize,
) -> Result<BTreeMap<Attribute, AttributeBreakdown>, MetricsError> {
    if let Some(&k) = eval.eligible_frames.iter().find(|&&k| k > attrs.len()) {
        return Err(MetricsError::AttributeLength {
            len: attrs.len(),
            frame: k,
        });
    }
    let mut out = BTreeMap::new();
    for &a in selection {
        let (frames, scores): (Vec<usize>, Vec<FrameScores>) = eval
            .eligible_frames
            .iter()
            .zip(&eval.scores)
            .filter(|(&k, _)| attrs[k - 1].flag(a))
            .map(|(&k, s)| (k, *s))
            .unzip();
        let curves = if frames.len() >= min_frames.max(1) {
            Some(curves_for(&scores)?)
        } else {
            None
        };
        out.insert(a, AttributeBreakdown { frames, curves });
    }
    Ok(out)
}

/// Attribute curves over the pooled frames of several sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledBreakdown {
    pub sequences: usize,
    pub frames: usize,
    pub curves: Option<Vec<EvaluationCurve>>,
}

/// Like [`attribute_breakdown`], pooling the attribute frames of every
/// sequence before building the curves.
pub fn pooled_attribute_breakdown(
    inputs: &[(&SequenceEvaluation, &[AttributeVector])],
    selection: &[Attribute],
    min_frames: usize,
) -> Result<BTreeMap<Attribute, PooledBreakdown>, MetricsError> {
    let mut pooled: BTreeMap<Attribute, (usize, Vec<FrameScores>)> =
        selection.iter().map(|&a| (a, (0, Vec::new()))).collect();
    for (eval, attrs) in inputs {
        let per_seq = attribute_breakdown(eval, attrs, selection, usize::MAX)?;
        for (a, b) in per_seq {
            let entry = pooled.get_mut(&a).expect("selected attribute");
            if !b.frames.is_empty() {
                entry.0 += 1;
            }
            entry.1.extend(
                eval.eligible_frames
                    .iter()
                    .zip(&eval.scores)
                    .filter(|(k, _)| b.frames.binary_search(k).is_ok())
                    .map(|(_, s)| *s),
            );
        }
    }
    pooled
        .into_iter()
        .map(|(a, (sequences, scores))| {
            let curves = if scores.len() >= min_frames.max(1) {
                Some(curves_for(&scores)?)
            } else {
                None
            };
            Ok((
                a,
                PooledBreakdown {
                    sequences,
                    frames: scores.len(),
                    curves,
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScore {
    pub auc: f64,
    pub rank_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEvaluation {
    pub sequences: usize,
    pub frames: usize,
    /// Curves over the pooled frames of all sequences.
    pub curves: Vec<EvaluationCurve>,
    /// Unweighted mean over sequences of each metric's AUC and rank score.
    pub per_sequence_mean: BTreeMap<MetricKind, MeanScore>,
}

impl AggregateEvaluation {
    pub fn curve(&self, metric: MetricKind) -> &EvaluationCurve {
        self.curves
            .iter()
            .find(|c| c.metric == metric)
            .expect("aggregate carries all metrics")
    }
}

/// Order-independent mean.
fn stable_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v = sorted(&values.into_iter().collect::<Vec<_>>());
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pools the per-frame scores of all sequences and rebuilds the curves.
pub fn aggregate(evals: &[SequenceEvaluation]) -> Result<AggregateEvaluation, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pooled: Vec<FrameScores> = evals.iter().flat_map(|e| e.scores.iter().copied()).collect();
    let curves = curves_for(&pooled)?;
    let per_sequence_mean = MetricKind::ALL
        .into_iter()
        .map(|m| {
            let mean = MeanScore {
                auc: stable_mean(evals.iter().map(|e| e.curve(m).auc)),
                rank_score: stable_mean(evals.iter().map(|e| e.curve(m).rank_score)),
            };
            (m, mean)
        })
        .collect();
    Ok(AggregateEvaluation {
        sequences: evals.len(),
        frames: pooled.len(),
        curves,
        per_sequence_mean,
    })
}

/// The squashing function applied to `1 / rho` in the robustness score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `1 / (1 + e^-x)`
    #[default]
    Logistic,
    /// `tanh(x)`
    Tanh,
}

impl Weighting {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Weighting::Logistic => 1.0 / (1.0 + (-x).exp()),
            Weighting::Tanh => x.tanh(),
        }
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "sigmoid" => Ok(Weighting::Logistic),
            "tanh" => Ok(Weighting::Tanh),
            other => Err(format!("unknown weighting '{other}'")),
        }
    }
}

/// Restart statistics of one R-OPE session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessInput {
    pub sequence_id: String,
    /// Mean inter-frame correlation of the video.
    pub rho: f64,
    /// Size of the restart schedule.
    pub restart_points: usize,
    /// Restarts the tracker needed.
    pub restarts_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRobustness {
    pub sequence_id: String,
    pub rho: f64,
    pub restart_points: usize,
    pub restarts_used: usize,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub n: usize,
    pub weighting: Weighting,
    pub videos: Vec<VideoRobustness>,
    pub r: f64,
}

/// `R = mean_i S(1/rho_i) * (1 - I_i / R_i)`.
pub fn robustness(
    sessions: &[RobustnessInput],
    weighting: Weighting,
) -> Result<RobustnessReport, MetricsError> {
    if sessions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut videos = Vec::with_capacity(sessions.len());
    for s in sessions {
        if s.restart_points == 0 {
            return Err(MetricsError::NoRestartPoints(s.sequence_id.clone()));
        }
        if s.restarts_used > s.restart_points {
            return Err(MetricsError::TooManyRestarts {
                id: s.sequence_id.clone(),
                used: s.restarts_used,
                points: s.restart_points,
            });
        }
        if s.rho.is_nan() || s.rho > 1.0 {
            return Err(MetricsError::BadCorrelation {
                id: s.sequence_id.clone(),
                rho: s.rho,
            });
        }
        let rho = if s.rho < MIN_RHO {
            log::warn!("{}: correlation {} clamped to {MIN_RHO}", s.sequence_id, s.rho);
            MIN_RHO
        } else {
            s.rho
        };
        let weight = weighting.apply(1.0 / rho);
        let contribution = weight * (1.0 - s.restarts_used as f64 / s.restart_points as f64);
        videos.push(VideoRobustness {
            sequence_id: s.sequence_id.clone(),
            rho,
            restart_points: s.restart_points,
            restarts_used: s.restarts_used,
            weight,
            contribution,
        });
    }
    let r = stable_mean(videos.iter().map(|v| v.contribution));
    Ok(RobustnessReport {
        n: videos.len(),
        weighting,
        videos,
        r,
    })
}
