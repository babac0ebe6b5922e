use std::fmt::{self, Write as _};

use serde::Serialize;

use super::ReportError;
use crate::dsl;
use crate::llm::{CompletionRequest, Provider, RequestTag};
use crate::metrics::{self, MetricMode, MetricReport};
use crate::timeseries::{incidents_from_labels, Incident, TimeSeriesTable};

const EVIDENCE_LIMIT: usize = 3;
const Z_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Moderate,
    Severe,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "low",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        })
    }
}

/// Mean incident score below 0.5 is low; otherwise incidents covering
/// under 1% of the series are moderate and longer ones severe.
pub fn severity(mean_score: f64, incident_len: usize, series_len: usize) -> Severity {
    if mean_score < 0.5 {
        Severity::Low
    } else if (incident_len as f64) < 0.01 * series_len as f64 {
        Severity::Moderate
    } else {
        Severity::Severe
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub feature: String,
    pub value: f64,
    /// Standardised against the training split's mean and population std.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncidentEntry {
    pub span: Incident,
    pub start_timestamp: i64,
    pub end_timestamp: i64,
    pub peak_row: usize,
    pub peak_score: f64,
    pub mean_score: f64,
    pub evidence: Vec<Evidence>,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub rule_code: String,
    pub rule_context: String,
    pub threshold: f64,
    pub rows: usize,
    pub incidents: Vec<IncidentEntry>,
    pub test_metrics: Option<MetricReport>,
}

/// Scores `test` with the rule and describes every flagged incident.
///
/// `train` supplies the reference mean and std for evidence z-scores.
pub fn generate_report(
    code: &str,
    context: &str,
    train: &TimeSeriesTable,
    test: &TimeSeriesTable,
    threshold: f64,
) -> Result<DiagnosticReport, ReportError> {
    let rule = dsl::compile(code, test.feature_names())?;
    let scores = dsl::evaluate(&rule, test)?;
    let flags = dsl::to_flags(&scores, threshold);
    let values = scores.coerced();
    let references: Vec<(String, f64, f64)> = rule
        .features()
        .iter()
        .filter_map(|name| {
            let col = train.column(name)?;
            let m = dsl::window_mean(col);
            Some((name.clone(), m, dsl::window_std(col, m)))
        })
        .collect();

    let incidents = incidents_from_labels(&flags)
        .iter()
        .map(|span| describe(span, &values, test, &references))
        .collect();

    let test_metrics = match test.labels() {
        Some(labels) => Some(metrics::score(&flags, labels, MetricMode::EventPa)?),
        None => None,
    };
    Ok(DiagnosticReport {
        rule_code: code.trim().to_string(),
        rule_context: context.trim().to_string(),
        threshold,
        rows: test.len(),
        incidents,
        test_metrics,
    })
}

fn describe(
    span: &Incident,
    scores: &[f64],
    test: &TimeSeriesTable,
    references: &[(String, f64, f64)],
) -> IncidentEntry {
    let window = &scores[span.start..=span.end];
    let (offset, peak) = window
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let peak_row = span.start + offset;
    let mean_score = window.iter().sum::<f64>() / window.len() as f64;

    let mut evidence: Vec<Evidence> = references
        .iter()
        .filter_map(|(name, mean, std)| {
            let value = test.column(name)?[peak_row];
            Some(Evidence {
                feature: name.clone(),
                value,
                z_score: (value - mean) / (std + Z_EPS),
            })
        })
        .collect();
    evidence.sort_by(|a, b| b.z_score.abs().total_cmp(&a.z_score.abs()));
    evidence.truncate(EVIDENCE_LIMIT);

    let ts = test.timestamps();
    IncidentEntry {
        span: *span,
        start_timestamp: ts[span.start],
        end_timestamp: ts[span.end],
        peak_row,
        peak_score: peak,
        mean_score,
        evidence,
        severity: severity(mean_score, span.len(), test.len()),
    }
}

impl DiagnosticReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Diagnostic report");
        let _ = writeln!(out, "Rule (flags rows scoring above {}):", self.threshold);
        for line in self.rule_code.lines() {
            let _ = writeln!(out, "    {line}");
        }
        out.push('\n');

        let _ = writeln!(out, "## Identify the Fault");
        if self.incidents.is_empty() {
            let _ = writeln!(out, "No anomalies detected in {} rows.", self.rows);
        } else {
            let _ = writeln!(
                out,
                "{} incident(s) detected in {} rows. Physical hypothesis behind the rule:",
                self.incidents.len(),
                self.rows
            );
            let _ = writeln!(out, "{}", self.rule_context);
        }
        out.push('\n');

        let _ = writeln!(out, "## Provide Evidence");
        if self.incidents.is_empty() {
            let _ = writeln!(out, "No anomalies detected.");
        }
        for (i, inc) in self.incidents.iter().enumerate() {
            let _ = writeln!(
                out,
                "Incident {}: rows {}..={} (t={}..{}), peak score {:.6} at row {}",
                i + 1,
                inc.span.start,
                inc.span.end,
                inc.start_timestamp,
                inc.end_timestamp,
                inc.peak_score,
                inc.peak_row
            );
            for e in &inc.evidence {
                let _ = writeln!(
                    out,
                    "  - {} = {:.4} ({:+.2} std from its training mean)",
                    e.feature, e.value, e.z_score
                );
            }
        }
        out.push('\n');

        let _ = writeln!(out, "## Assess Severity");
        if self.incidents.is_empty() {
            let _ = writeln!(out, "No anomalies detected.");
        }
        for (i, inc) in self.incidents.iter().enumerate() {
            let _ = writeln!(
                out,
                "Incident {}: {} ({} rows, {:.2}% of the series, mean score {:.3})",
                i + 1,
                inc.severity,
                inc.span.len(),
                100.0 * inc.span.len() as f64 / self.rows.max(1) as f64,
                inc.mean_score
            );
        }

        if let Some(m) = &self.test_metrics {
            out.push('\n');
            let _ = writeln!(out, "## Test metrics");
            let _ = writeln!(out, "{}", m.summary_line());
        }
        out
    }
}

const NARRATE_SYSTEM: &str = "You are an expert in the domain of building energy. Rewrite the \
diagnostic report you are given as clear prose for a facilities engineer. Keep the three \
section headings and every number unchanged.";

/// Sends the rendered report through the provider for prose elaboration.
/// Offline providers return the skeleton unchanged.
pub fn narrate(report_text: &str, provider: &dyn Provider) -> Result<String, ReportError> {
    let req = CompletionRequest::new(RequestTag::Narrate, NARRATE_SYSTEM, report_text)
        .max_tokens(2048);
    Ok(provider.complete(&req)?.text)
}
