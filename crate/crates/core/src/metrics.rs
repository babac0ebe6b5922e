//! Detection scoring: pointwise counts, point adjustment and Event-F1 PA.
//!
//! Event-F1 PA counts each ground-truth incident once (hit if any of its
//! rows is flagged) while false positives are counted per flagged row
//! outside every incident:
//!
//! ```text
//! precision = TP_e / (TP_e + FP_p)     recall = TP_e / (TP_e + FN_e)
//! ```
//!
//! Every ratio uses the convention 0/0 = 0.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{incidents_from_labels, IncidentSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {flags} flags vs {labels} labels")]
    LengthMismatch { flags: usize, labels: usize },
    #[error("incident ({start}, {end}) is outside {len} flags")]
    IncidentOutOfRange { start: usize, end: usize, len: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    Pointwise,
    PointAdjusted,
    EventPa,
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricMode::Pointwise => "pointwise",
            MetricMode::PointAdjusted => "point_adjusted",
            MetricMode::EventPa => "event_pa",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mode: MetricMode,
}

impl MetricReport {
    fn from_ratios(precision: f64, recall: f64, mode: MetricMode) -> Self {
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
            mode,
        }
    }

    /// `mode=<m> precision=<p> recall=<r> f1=<f>` with six decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "mode={} precision={:.6} recall={:.6} f1={:.6}",
            self.mode, self.precision, self.recall, self.f1
        )
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn check_len(flags: &[u8], labels: &[u8]) -> Result<(), MetricsError> {
    if flags.len() == labels.len() {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch {
            flags: flags.len(),
            labels: labels.len(),
        })
    }
}

pub fn confusion(flags: &[u8], labels: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    check_len(flags, labels)?;
    let mut c = ConfusionCounts::default();
    for (&f, &l) in flags.iter().zip(labels) {
        match (f != 0, l != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn precision_recall_f1(counts: &ConfusionCounts) -> MetricReport {
    MetricReport::from_ratios(
        ratio(counts.tp, counts.tp + counts.fp),
        ratio(counts.tp, counts.tp + counts.fn_),
        MetricMode::Pointwise,
    )
}

/// Expands every incident that contains at least one flagged row to a fully
/// flagged incident. Flags outside incidents are left as they are.
pub fn point_adjust(flags: &[u8], incidents: &IncidentSet) -> Result<Vec<u8>, MetricsError> {
    let mut out = flags.to_vec();
    for inc in incidents {
        if inc.end >= flags.len() {
            return Err(MetricsError::IncidentOutOfRange {
                start: inc.start,
                end: inc.end,
                len: flags.len(),
            });
        }
        if flags[inc.start..=inc.end].iter().any(|&f| f != 0) {
            out[inc.start..=inc.end].fill(1);
        }
    }
    Ok(out)
}

/// Pointwise precision/recall/F1 after point adjustment.
pub fn point_adjusted_f1(flags: &[u8], labels: &[u8]) -> Result<MetricReport, MetricsError> {
    check_len(flags, labels)?;
    let adjusted = point_adjust(flags, &incidents_from_labels(labels))?;
    let mut report = precision_recall_f1(&confusion(&adjusted, labels)?);
    report.mode = MetricMode::PointAdjusted;
    Ok(report)
}

/// Event-level hit/miss counts plus point-level false positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub tp_events: u64,
    pub fn_events: u64,
    pub fp_points: u64,
}

pub fn event_counts(flags: &[u8], labels: &[u8]) -> Result<EventCounts, MetricsError> {
    check_len(flags, labels)?;
    let incidents = incidents_from_labels(labels);
    let hit = incidents
        .iter()
        .filter(|inc| flags[inc.start..=inc.end].iter().any(|&f| f != 0))
        .count() as u64;
    let fp_points = flags
        .iter()
        .zip(labels)
        .filter(|(&f, &l)| f != 0 && l == 0)
        .count() as u64;
    Ok(EventCounts {
        tp_events: hit,
        fn_events: incidents.len() as u64 - hit,
        fp_points,
    })
}

pub fn event_f1_pa(flags: &[u8], labels: &[u8]) -> Result<MetricReport, MetricsError> {
    let c = event_counts(flags, labels)?;
    Ok(MetricReport::from_ratios(
        ratio(c.tp_events, c.tp_events + c.fp_points),
        ratio(c.tp_events, c.tp_events + c.fn_events),
        MetricMode::EventPa,
    ))
}

/// Scores `flags` against `labels` in the requested mode.
pub fn score(flags: &[u8], labels: &[u8], mode: MetricMode) -> Result<MetricReport, MetricsError> {
    match mode {
        MetricMode::Pointwise => Ok(precision_recall_f1(&confusion(flags, labels)?)),
        MetricMode::PointAdjusted => point_adjusted_f1(flags, labels),
        MetricMode::EventPa => event_f1_pa(flags, labels),
    }
}
