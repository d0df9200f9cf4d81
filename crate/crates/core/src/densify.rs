//! Dense labels from sparse manual keyframes.
//!
//! Every frame between two manual keyframes of the same shot is synthesized
//! from four boxes: the previous and next manual labels and the forward and
//! backward tracker predictions. DIoU agreement tests pick one of three
//! situations:
//!
//! 1. The manual neighbours barely moved: average them.
//! 2. The two tracker passes agree: keep whichever of them lies inside the
//!    hull of the manual neighbours.
//! 3. Otherwise (fast motion or near a shot boundary): lean on the manual
//!    label of the same shot side, or clip the better-anchored prediction to
//!    the hull.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ResultTrack;
use crate::geometry::{average_box, contains, diou, enclose, intersect, BoundingBox};

pub const DEFAULT_TAU1: f64 = 0.9;
pub const DEFAULT_TAU2: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensifyError {
    #[error("threshold {name} = {value} outside (-1, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("frame {frame}: no enclosing pair of keyframes within its shot")]
    Unbracketed { frame: usize },
    #[error("frame {frame}: {track} track has no box")]
    MissingPrediction { frame: usize, track: &'static str },
    #[error("keyframe {frame} has no manual box")]
    EmptyKeyframe { frame: usize },
    #[error("keyframe {frame} out of range 1..={len}")]
    KeyframeRange { frame: usize, len: usize },
    #[error("{what} covers {actual} frames, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// Where a frame sits relative to shot boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotPosition {
    LastTwoInShot,
    FirstTwoInShot,
    Interior,
}

/// How a dense label was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Manual,
    Situation1,
    Situation2a,
    Situation2b,
    Situation2c,
    Situation3Shot,
    Situation3D3,
    Situation3D4,
    Fallback,
}

impl Provenance {
    pub const ALL: [Provenance; 9] = [
        Provenance::Manual,
        Provenance::Situation1,
        Provenance::Situation2a,
        Provenance::Situation2b,
        Provenance::Situation2c,
        Provenance::Situation3Shot,
        Provenance::Situation3D3,
        Provenance::Situation3D4,
        Provenance::Fallback,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Manual => "manual",
            Provenance::Situation1 => "situation1",
            Provenance::Situation2a => "situation2a",
            Provenance::Situation2b => "situation2b",
            Provenance::Situation2c => "situation2c",
            Provenance::Situation3Shot => "situation3_shot",
            Provenance::Situation3D3 => "situation3_d3",
            Provenance::Situation3D4 => "situation3_d4",
            Provenance::Fallback => "fallback",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| format!("unknown provenance tag '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyContext {
    /// Nearest earlier manual label.
    pub prev_gt: BoundingBox,
    /// Nearest later manual label.
    pub next_gt: BoundingBox,
    /// Prediction of the forward pass (from `prev_gt` towards `next_gt`).
    pub forward: BoundingBox,
    /// Prediction of the backward pass.
    pub backward: BoundingBox,
    pub shot_position: ShotPosition,
    pub tau1: f64,
    pub tau2: f64,
}

/// Synthesized label of one frame plus the agreement scores that chose it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifiedFrame {
    pub bbox: BoundingBox,
    pub provenance: Provenance,
    pub d1: f64,
    pub d2: f64,
    pub d3: Option<f64>,
    pub d4: Option<f64>,
}

pub fn check_thresholds(tau1: f64, tau2: f64) -> Result<(), DensifyError> {
    for (name, value) in [("tau1", tau1), ("tau2", tau2)] {
        if !(value > -1.0 && value <= 1.0) {
            return Err(DensifyError::Threshold { name, value });
        }
    }
    Ok(())
}

pub fn densify_frame(ctx: &DensifyContext) -> DensifiedFrame {
    let DensifyContext {
        prev_gt,
        next_gt,
        forward,
        backward,
        ..
    } = ctx;
    let d1 = diou(prev_gt, next_gt);
    let d2 = diou(forward, backward);
    let out = |bbox, provenance, d3, d4| DensifiedFrame {
        bbox,
        provenance,
        d1,
        d2,
        d3,
        d4,
    };

    if d1 >= ctx.tau1 {
        return out(average_box(prev_gt, next_gt), Provenance::Situation1, None, None);
    }

    let hull = enclose(prev_gt, next_gt);
    if d2 >= ctx.tau2 {
        return match (contains(&hull, forward), contains(&hull, backward)) {
            (true, true) => out(
                average_box(forward, backward),
                Provenance::Situation2a,
                None,
                None,
            ),
            (true, false) => out(*forward, Provenance::Situation2b, None, None),
            (false, true) => out(*backward, Provenance::Situation2b, None, None),
            (false, false) => out(average_box(prev_gt, next_gt), Provenance::Situation2c, None, None),
        };
    }

    match ctx.shot_position {
        ShotPosition::LastTwoInShot => out(
            average_box(forward, prev_gt),
            Provenance::Situation3Shot,
            None,
            None,
        ),
        ShotPosition::FirstTwoInShot => out(
            average_box(backward, next_gt),
            Provenance::Situation3Shot,
            None,
            None,
        ),
        ShotPosition::Interior => {
            let d3 = diou(prev_gt, forward);
            let d4 = diou(next_gt, backward);
            let (candidate, tag) = if d3 >= d4 {
                (forward, Provenance::Situation3D3)
            } else {
                (backward, Provenance::Situation3D4)
            };
            match intersect(&hull, candidate) {
                Some(b) => out(b, tag, Some(d3), Some(d4)),
                None => out(
                    average_box(prev_gt, next_gt),
                    Provenance::Fallback,
                    Some(d3),
                    Some(d4),
                ),
            }
        }
    }
}

/// Manual labels on a subset of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ManualTrack {
    /// Per-frame boxes; only entries at keyframes are read.
    pub boxes: Vec<Option<BoundingBox>>,
    /// 1-based keyframe indices.
    pub keyframes: Vec<usize>,
}

impl ManualTrack {
    /// Every frame is a keyframe.
    pub fn dense(boxes: Vec<BoundingBox>) -> Self {
        Self {
            keyframes: (1..=boxes.len()).collect(),
            boxes: boxes.into_iter().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrack {
    pub boxes: Vec<BoundingBox>,
    pub provenance: Vec<Provenance>,
    /// Agreement scores of generated frames; `None` on manual frames.
    pub details: Vec<Option<DensifiedFrame>>,
}

impl DenseTrack {
    /// Provenance CSV: `frame,tag,D1,D2,D3,D4` with 1-based frames.
    pub fn provenance_csv(&self) -> String {
        let mut out = String::from("frame,tag,D1,D2,D3,D4\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for (k, (tag, d)) in self.provenance.iter().zip(&self.details).enumerate() {
            let (d1, d2, d3, d4) = match d {
                Some(d) => (Some(d.d1), Some(d.d2), d.d3, d.d4),
                None => (None, None, None, None),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                k + 1,
                tag,
                opt(d1),
                opt(d2),
                opt(d3),
                opt(d4)
            ));
        }
        out
    }
}

/// Shot position of 0-based frame `k` from the shot-cut flags, which mark
/// the first frame of each new shot.
pub fn shot_position(shotcut: &[bool], k: usize) -> ShotPosition {
    let flagged = |j: Option<usize>| j.and_then(|j| shotcut.get(j)).copied().unwrap_or(false);
    if flagged(Some(k + 1)) || flagged(Some(k + 2)) {
        ShotPosition::LastTwoInShot
    } else if flagged(k.checked_sub(1)) || flagged(k.checked_sub(2)) {
        ShotPosition::FirstTwoInShot
    } else {
        ShotPosition::Interior
    }
}

pub fn densify_sequence(
    manual: &ManualTrack,
    forward: &ResultTrack,
    backward: &ResultTrack,
    shotcut: &[bool],
    tau1: f64,
    tau2: f64,
) -> Result<DenseTrack, DensifyError> {
    check_thresholds(tau1, tau2)?;
    let n = manual.boxes.len();
    for (what, len) in [
        ("forward track", forward.len()),
        ("backward track", backward.len()),
        ("shot-cut flags", shotcut.len()),
    ] {
        if len != n {
            return Err(DensifyError::Length {
                what,
                expected: n,
                actual: len,
            });
        }
    }

    let mut is_key = vec![false; n];
    for &k in &manual.keyframes {
        if k == 0 || k > n {
            return Err(DensifyError::KeyframeRange { frame: k, len: n });
        }
        if manual.boxes[k - 1].is_none() {
            return Err(DensifyError::EmptyKeyframe { frame: k });
        }
        is_key[k - 1] = true;
    }

    // shot id of each frame
    let mut shot = vec![0usize; n];
    for k in 1..n {
        shot[k] = shot[k - 1] + usize::from(shotcut[k]);
    }
    // nearest keyframe at or before / at or after each frame, within its shot
    let mut before = vec![None; n];
    let mut last: Option<usize> = None;
    for k in 0..n {
        if last.is_some_and(|j| shot[j] != shot[k]) {
            last = None;
        }
        if is_key[k] {
            last = Some(k);
        }
        before[k] = last;
    }
    let mut after = vec![None; n];
    let mut next: Option<usize> = None;
    for k in (0..n).rev() {
        if next.is_some_and(|j| shot[j] != shot[k]) {
            next = None;
        }
        if is_key[k] {
            next = Some(k);
        }
        after[k] = next;
    }

    let mut boxes = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    let mut details = Vec::with_capacity(n);
    for k in 0..n {
        if is_key[k] {
            boxes.push(manual.boxes[k].expect("keyframes checked above"));
            provenance.push(Provenance::Manual);
            details.push(None);
            continue;
        }
        let frame = k + 1;
        let (Some(p), Some(q)) = (before[k], after[k]) else {
            return Err(DensifyError::Unbracketed { frame });
        };
        let fwd = forward.boxes[k].ok_or(DensifyError::MissingPrediction {
            frame,
            track: "forward",
        })?;
        let bwd = backward.boxes[k].ok_or(DensifyError::MissingPrediction {
            frame,
            track: "backward",
        })?;
        let ctx = DensifyContext {
            prev_gt: manual.boxes[p].expect("keyframe"),
            next_gt: manual.boxes[q].expect("keyframe"),
            forward: fwd,
            backward: bwd,
            shot_position: shot_position(shotcut, k),
            tau1,
            tau2,
        };
        let d = densify_frame(&ctx);
        boxes.push(d.bbox);
        provenance.push(d.provenance);
        details.push(Some(d));
    }
    Ok(DenseTrack {
        boxes,
        provenance,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    fn ctx(p: BoundingBox, n: BoundingBox, f: BoundingBox, b: BoundingBox) -> DensifyContext {
        DensifyContext {
            prev_gt: p,
            next_gt: n,
            forward: f,
            backward: b,
            shot_position: ShotPosition::Interior,
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
        }
    }

    #[test]
    fn identical_inputs_are_situation1() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let d = densify_frame(&ctx(a, a, a, a));
        assert_eq!(d.bbox, a);
        assert_eq!(d.provenance, Provenance::Situation1);
        assert_eq!(d.d1, 1.0);
    }

    #[test]
    fn agreeing_predictions_inside_hull() {
        let mid = bb(10.0, 0.0, 10.0, 10.0);
        let d = densify_frame(&ctx(
            bb(0.0, 0.0, 10.0, 10.0),
            bb(20.0, 0.0, 10.0, 10.0),
            mid,
            mid,
        ));
        // centers 20 apart, hull diagonal^2 = 30^2 + 10^2
        assert!((d.d1 - (0.0 - 400.0 / 1000.0)).abs() < 1e-12);
        assert_eq!(d.d2, 1.0);
        assert_eq!(d.provenance, Provenance::Situation2a);
        assert_eq!(d.bbox, mid);
    }

    #[test]
    fn one_prediction_inside_hull() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        let n = bb(20.0, 0.0, 10.0, 10.0);
        let inside = bb(10.0, 0.0, 10.0, 10.0);
        let poking_out = bb(11.0, 0.5, 10.0, 10.0);
        let d = densify_frame(&ctx(p, n, inside, poking_out));
        assert!(d.d2 >= DEFAULT_TAU2);
        assert_eq!(d.provenance, Provenance::Situation2b);
        assert_eq!(d.bbox, inside);
        let d = densify_frame(&ctx(p, n, poking_out, inside));
        assert_eq!(d.bbox, inside);
    }

    #[test]
    fn disjoint_predictions_fall_back() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        let n = bb(20.0, 0.0, 10.0, 10.0);
        let d = densify_frame(&ctx(
            p,
            n,
            bb(100.0, 100.0, 10.0, 10.0),
            bb(200.0, 200.0, 10.0, 10.0),
        ));
        let (d3, d4) = (d.d3.unwrap(), d.d4.unwrap());
        assert!(d3 >= d4);
        assert_eq!(d.provenance, Provenance::Fallback);
        assert_eq!(d.bbox, bb(10.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn shot_positions() {
        let cuts = [false, false, false, false, true, false, false, false];
        assert_eq!(shot_position(&cuts, 0), ShotPosition::Interior);
        assert_eq!(shot_position(&cuts, 2), ShotPosition::LastTwoInShot);
        assert_eq!(shot_position(&cuts, 3), ShotPosition::LastTwoInShot);
        assert_eq!(shot_position(&cuts, 5), ShotPosition::FirstTwoInShot);
        assert_eq!(shot_position(&cuts, 6), ShotPosition::FirstTwoInShot);
        assert_eq!(shot_position(&cuts, 7), ShotPosition::Interior);
    }

    #[test]
    fn shot_branches() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        let n = bb(50.0, 0.0, 10.0, 10.0);
        let f = bb(100.0, 100.0, 10.0, 10.0);
        let b = bb(300.0, 300.0, 10.0, 10.0);
        let mut c = ctx(p, n, f, b);
        c.shot_position = ShotPosition::LastTwoInShot;
        let d = densify_frame(&c);
        assert_eq!(d.provenance, Provenance::Situation3Shot);
        assert_eq!(d.bbox, average_box(&f, &p));
        c.shot_position = ShotPosition::FirstTwoInShot;
        assert_eq!(densify_frame(&c).bbox, average_box(&b, &n));
    }

    #[test]
    fn all_manual_is_identity() {
        let boxes: Vec<_> = (0..5).map(|k| bb(k as f64, 1.0, 4.0, 4.0)).collect();
        let manual = ManualTrack::dense(boxes.clone());
        let empty = ResultTrack::from_boxes("s", vec![None; 5]);
        let out = densify_sequence(&manual, &empty, &empty, &[false; 5], 0.9, 0.5).unwrap();
        assert_eq!(out.boxes, boxes);
        assert!(out.provenance.iter().all(|p| *p == Provenance::Manual));
    }

    #[test]
    fn missing_forward_box_names_frame() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let manual = ManualTrack {
            boxes: vec![Some(b), None, Some(b)],
            keyframes: vec![1, 3],
        };
        let fwd = ResultTrack::from_boxes("s", vec![None; 3]);
        let bwd = ResultTrack::from_boxes("s", vec![Some(b); 3]);
        assert_eq!(
            densify_sequence(&manual, &fwd, &bwd, &[false; 3], 0.9, 0.5),
            Err(DensifyError::MissingPrediction {
                frame: 2,
                track: "forward"
            })
        );
    }

    #[test]
    fn gap_across_shot_cut_is_unbracketed() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let manual = ManualTrack {
            boxes: vec![Some(b), None, None, Some(b)],
            keyframes: vec![1, 4],
        };
        let t = ResultTrack::from_boxes("s", vec![Some(b); 4]);
        let cuts = [false, false, true, false];
        assert_eq!(
            densify_sequence(&manual, &t, &t, &cuts, 0.9, 0.5),
            Err(DensifyError::Unbracketed { frame: 2 })
        );
    }

    #[test]
    fn rejects_bad_thresholds() {
        assert!(check_thresholds(-1.0, 0.5).is_err());
        assert!(check_thresholds(0.9, 1.5).is_err());
        assert!(check_thresholds(1.0, 0.5).is_ok());
    }

    #[test]
    fn provenance_csv_layout() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let manual = ManualTrack {
            boxes: vec![Some(a), None, Some(a)],
            keyframes: vec![1, 3],
        };
        let t = ResultTrack::from_boxes("s", vec![Some(a); 3]);
        let out = densify_sequence(&manual, &t, &t, &[false; 3], 0.9, 0.5).unwrap();
        assert_eq!(
            out.provenance_csv(),
            "frame,tag,D1,D2,D3,D4\n1,manual,,,,\n2,situation1,1,1,,\n3,manual,,,,\n"
        );
    }
}
