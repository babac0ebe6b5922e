//! Run logs and diagnostic reports.

mod diagnostic;
mod runlog;

use std::path::Path;

use thiserror::Error;

pub use diagnostic::{generate_report, narrate, severity, DiagnosticReport, Evidence, IncidentEntry, Severity};
pub use runlog::{
    code_hash, GenerationSummary, LogRecord, RequestEntry, RunLog, BEST_FILE, CONFIG_FILE,
    GENERATIONS_FILE, RECORDS_FILE, REPORT_FILE, REQUESTS_FILE, TRAIN_FILE,
};

use crate::dsl::{DslError, EvalError};
use crate::llm::ProviderError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("candidate `{0}` already has a record")]
    DuplicateRecord(String),
    #[error("run directory {0} already contains a run")]
    RunExists(String),
    #[error("rule does not compile: {0}")]
    Rule(#[from] DslError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl ReportError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ReportError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
