//! Evaluation summaries (`summary.json`) and the ranking tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use giteval::attributes::Attribute;
use giteval::metrics::{
    AggregateEvaluation, EvaluationCurve, MeanScore, MetricKind, RobustnessReport, SequenceEvaluation,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "OPE")]
    Ope,
    #[serde(rename = "R-OPE")]
    Rope,
}

impl Mechanism {
    pub fn label(self) -> &'static str {
        match self {
            Mechanism::Ope => "OPE",
            Mechanism::Rope => "R-OPE",
        }
    }
}

/// A sequence that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracker: Option<String>,
    pub sequence: String,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.tracker {
            Some(t) => write!(f, "{t}/{}: {}", self.sequence, self.message),
            None => write!(f, "{}: {}", self.sequence, self.message),
        }
    }
}

pub type Scores = BTreeMap<MetricKind, MeanScore>;

pub fn scores_of(curves: &[EvaluationCurve]) -> Scores {
    curves
        .iter()
        .map(|c| {
            (
                c.metric,
                MeanScore {
                    auc: c.auc,
                    rank_score: c.rank_score,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub id: String,
    pub frames: usize,
    pub scores: Scores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart_points: Option<usize>,
}

impl SequenceSummary {
    pub fn from_evaluation(e: &SequenceEvaluation) -> Self {
        Self {
            id: e.sequence_id.clone(),
            frames: e.eligible_frames.len(),
            scores: scores_of(&e.curves),
            restarts_used: None,
            restart_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub sequences: usize,
    pub frames: usize,
    /// Scores of the pooled frames.
    pub scores: Scores,
    pub per_sequence_mean: Scores,
}

impl From<&AggregateEvaluation> for AggregateSummary {
    fn from(a: &AggregateEvaluation) -> Self {
        Self {
            sequences: a.sequences,
            frames: a.frames,
            scores: scores_of(&a.curves),
            per_sequence_mean: a.per_sequence_mean.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub sequences: usize,
    pub frames: usize,
    /// `None` when too few frames carry the attribute.
    pub scores: Option<Scores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerSummary {
    pub name: String,
    pub sequences: Vec<SequenceSummary>,
    pub aggregate: Option<AggregateSummary>,
    pub attributes: BTreeMap<Attribute, AttributeEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessReport>,
}

impl TrackerSummary {
    /// Ranking value of a metric: precision at the rank threshold for PRE,
    /// AUC otherwise.
    pub fn score(&self, metric: MetricKind) -> Option<f64> {
        self.aggregate
            .as_ref()
            .and_then(|a| a.scores.get(&metric))
            .map(|s| s.rank_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mechanism: Mechanism,
    pub rank_by: MetricKind,
    pub trackers: Vec<TrackerSummary>,
    pub errors: Vec<Failure>,
    pub warnings: Vec<String>,
}

/// A column of a ranking table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Column {
    Metric(MetricKind),
    Robustness,
}

impl Column {
    pub fn header(self) -> String {
        match self {
            Column::Metric(MetricKind::Pre) => "PRE@20".to_string(),
            Column::Metric(m) => m.code().replace('_', "-"),
            Column::Robustness => "R".to_string(),
        }
    }

    pub fn value(self, t: &TrackerSummary) -> Option<f64> {
        match self {
            Column::Metric(m) => t.score(m),
            Column::Robustness => t.robustness.as_ref().map(|r| r.r),
        }
    }
}

pub fn columns(mechanism: Mechanism) -> Vec<Column> {
    let mut cols: Vec<Column> = MetricKind::ALL.into_iter().map(Column::Metric).collect();
    if mechanism == Mechanism::Rope {
        cols.push(Column::Robustness);
    }
    cols
}

/// Competition ranks (1, 1, 3, ...) by descending value; missing values rank last.
pub fn ranks(values: &[Option<f64>]) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| v.map(|v| 1 + values.iter().filter(|o| o.is_some_and(|o| o > v)).count()))
        .collect()
}

fn fmt_score(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn fmt_rank(r: Option<usize>) -> String {
    r.map(|r| r.to_string()).unwrap_or_else(|| "-".into())
}

/// One table row per tracker, ordered by the selected metric; each metric has
/// its value followed by the tracker's rank under that metric.
pub fn ranking_table(summary: &Summary) -> String {
    let cols = columns(summary.mechanism);
    let trackers = &summary.trackers;
    let per_col: Vec<Vec<Option<usize>>> = cols
        .iter()
        .map(|c| ranks(&trackers.iter().map(|t| c.value(t)).collect::<Vec<_>>()))
        .collect();

    let key = Column::Metric(summary.rank_by);
    let mut order: Vec<usize> = (0..trackers.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (key.value(&trackers[a]), key.value(&trackers[b]));
        vb.unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&va.unwrap_or(f64::NEG_INFINITY))
            .then_with(|| trackers[a].name.cmp(&trackers[b].name))
    });
    let overall = ranks(&trackers.iter().map(|t| key.value(t)).collect::<Vec<_>>());

    let mut out = String::from("| Rank | Tracker |");
    for c in &cols {
        let _ = write!(out, " {} | # |", c.header());
    }
    out.push('\n');
    out.push_str("|---:|---|");
    for _ in &cols {
        out.push_str("---:|---:|");
    }
    out.push('\n');
    for &i in &order {
        let _ = write!(out, "| {} | {} |", fmt_rank(overall[i]), trackers[i].name);
        for (c, r) in cols.iter().zip(&per_col) {
            let _ = write!(
                out,
                " {} | {} |",
                fmt_score(c.value(&trackers[i])),
                fmt_rank(r[i])
            );
        }
        out.push('\n');
    }
    out
}

/// `ranking.md`: the ranking table plus the attribute breakdown of the
/// selected metric.
pub fn ranking_markdown(summary: &Summary) -> String {
    let mut out = format!(
        "# {} ranking\n\nOrdered by {}. `#` columns give the rank under each metric.\n\n",
        summary.mechanism.label(),
        summary.rank_by
    );
    out.push_str(&ranking_table(summary));

    let attrs: Vec<Attribute> = summary
        .trackers
        .iter()
        .flat_map(|t| t.attributes.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if !attrs.is_empty() {
        let _ = write!(out, "\n## Attributes ({})\n\n| Tracker |", summary.rank_by);
        for a in &attrs {
            let _ = write!(out, " {a} |");
        }
        out.push_str("\n|---|");
        for _ in &attrs {
            out.push_str("---:|");
        }
        out.push('\n');
        for t in &summary.trackers {
            let _ = write!(out, "| {} |", t.name);
            for a in &attrs {
                let v = t
                    .attributes
                    .get(a)
                    .and_then(|e| e.scores.as_ref())
                    .and_then(|s| s.get(&summary.rank_by))
                    .map(|s| s.rank_score);
                let _ = write!(out, " {} |", fmt_score(v));
            }
            out.push('\n');
        }
    }

    if !summary.errors.is_empty() {
        out.push_str("\n## Errors\n\n");
        for e in &summary.errors {
            let _ = writeln!(out, "- {e}");
        }
    }
    out
}
