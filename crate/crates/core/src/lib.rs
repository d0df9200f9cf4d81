//! Evaluation engine for long-term and global instance tracking.
//!
//! * [`geometry`]: box algebra, IoU / GIoU / DIoU, normalized precision.
//! * [`attributes`]: the twelve per-frame challenge attributes.
//! * [`dataset`]: track, flag, schedule and attribute file formats.
//! * [`densify`]: dense labels from sparse manual keyframes.
//! * [`metrics`]: precision, N-PRE and success curves, breakdowns, robustness.
//! * [`rope`]: restart-based evaluation over a line-delimited protocol.
//!
//! Frame indices exposed by this crate are 1-based, matching the files;
//! per-frame vectors are indexed from 0.

pub mod attributes;
pub mod dataset;
pub mod densify;
pub mod geometry;
pub mod metrics;
pub mod rope;

pub use attributes::{Attribute, AttributeVector, ThresholdConfig};
pub use dataset::{ResultTrack, SequenceRecord};
pub use geometry::{BoundingBox, FrameSize, Point};
pub use metrics::{EvaluationCurve, MetricKind, SequenceEvaluation};
pub use rope::{Message, SessionConfig, SessionResult};
