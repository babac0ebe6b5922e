//! Labeled multivariate time series: feature metadata, the aligned table,
//! CSV ingestion/export, chronological splitting and incident extraction.
//!
//! A table holds `M` feature columns of `T` rows each, a strictly increasing
//! timestamp key per row and an optional 0/1 label column. Timestamps are
//! opaque ordering keys; everything downstream indexes by row.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: cannot parse {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("order error at row {row}: timestamps must be strictly increasing")]
    Order { row: usize },
    #[error("range error: {0}")]
    Range(String),
    #[error("invalid table: {0}")]
    Invalid(String),
    #[error("invalid feature metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRole {
    Sensor,
    Command,
    Status,
    Derived,
}

/// Name, unit and physical role text for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub unit: String,
    pub description: String,
    pub role: FeatureRole,
}

impl FeatureMeta {
    pub fn new(
        name: impl Into<String>,
        unit: impl Into<String>,
        description: impl Into<String>,
        role: FeatureRole,
    ) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            description: description.into(),
            role,
        }
    }

    fn validate(&self) -> Result<(), TableError> {
        if !is_identifier(&self.name) {
            return Err(TableError::Meta(format!(
                "feature name {:?} is not an identifier",
                self.name
            )));
        }
        if self.description.trim().is_empty() {
            return Err(TableError::Meta(format!(
                "feature `{}` has an empty description",
                self.name
            )));
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn validate_metas(metas: &[FeatureMeta]) -> Result<(), TableError> {
    let mut seen = HashSet::new();
    for m in metas {
        m.validate()?;
        if !seen.insert(m.name.as_str()) {
            return Err(TableError::Meta(format!("duplicate feature `{}`", m.name)));
        }
        if m.name == "timestamp" || m.name == "label" {
            return Err(TableError::Meta(format!("`{}` is a reserved column", m.name)));
        }
    }
    Ok(())
}

/// Parses a feature metadata document (a JSON list of records).
pub fn load_meta_json(json: &str) -> Result<Vec<FeatureMeta>, TableError> {
    let metas: Vec<FeatureMeta> = serde_json::from_str(json)?;
    validate_metas(&metas)?;
    Ok(metas)
}

pub fn load_meta_file(path: impl AsRef<Path>) -> Result<Vec<FeatureMeta>, TableError> {
    load_meta_json(&std::fs::read_to_string(path)?)
}

pub fn meta_to_json(metas: &[FeatureMeta]) -> String {
    serde_json::to_string_pretty(metas).expect("feature metadata always serializes")
}

/// Aligned multivariate readings with optional binary labels.
///
/// Immutable after construction; all accessors borrow.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    features: Vec<FeatureMeta>,
    columns: Vec<Vec<f64>>,
    timestamps: Vec<i64>,
    labels: Option<Vec<u8>>,
}

impl TimeSeriesTable {
    pub fn new(
        features: Vec<FeatureMeta>,
        columns: Vec<Vec<f64>>,
        timestamps: Vec<i64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self, TableError> {
        validate_metas(&features)?;
        if features.len() != columns.len() {
            return Err(TableError::Invalid(format!(
                "{} features but {} columns",
                features.len(),
                columns.len()
            )));
        }
        let t = timestamps.len();
        if t == 0 {
            return Err(TableError::Invalid("table must have at least one row".into()));
        }
        for (meta, col) in features.iter().zip(&columns) {
            if col.len() != t {
                return Err(TableError::Invalid(format!(
                    "column `{}` has {} rows, expected {t}",
                    meta.name,
                    col.len()
                )));
            }
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(TableError::Order { row: row + 2 });
        }
        if let Some(labels) = &labels {
            if labels.len() != t {
                return Err(TableError::Invalid(format!(
                    "label column has {} rows, expected {t}",
                    labels.len()
                )));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(TableError::Invalid("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            features,
            columns,
            timestamps,
            labels,
        })
    }

    /// Number of rows `T`.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.feature_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Returns a copy with the label column replaced.
    pub fn with_labels(&self, labels: Option<Vec<u8>>) -> Result<Self, TableError> {
        Self::new(
            self.features.clone(),
            self.columns.clone(),
            self.timestamps.clone(),
            labels,
        )
    }

    /// Returns a copy with one column replaced.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self, TableError> {
        let idx = self
            .feature_index(name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))?;
        let mut columns = self.columns.clone();
        columns[idx] = values;
        Self::new(
            self.features.clone(),
            columns,
            self.timestamps.clone(),
            self.labels.clone(),
        )
    }

    /// Rows `range.start..range.end` as a new table.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, TableError> {
        if range.start >= range.end || range.end > self.len() {
            return Err(TableError::Range(format!(
                "row range {}..{} is empty or exceeds {} rows",
                range.start,
                range.end,
                self.len()
            )));
        }
        Self::new(
            self.features.clone(),
            self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            self.timestamps[range.clone()].to_vec(),
            self.labels.as_ref().map(|l| l[range].to_vec()),
        )
    }

    /// Serializes the table in the format accepted by [`load_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.features.iter().map(|f| f.name.clone()));
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for row in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.timestamps[row].to_string());
            rec.extend(self.columns.iter().map(|c| format_real(c[row])));
            if let Some(labels) = &self.labels {
                rec.push(labels[row].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

// `{}` on f64 prints the shortest string that parses back to the same value.
fn format_real(v: f64) -> String {
    format!("{v}")
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Reads a CSV document into a table whose columns follow `meta` order.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn load_csv(bytes: &[u8], meta: &[FeatureMeta]) -> Result<TimeSeriesTable, TableError> {
    validate_metas(meta)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);

    let ts_idx = find("timestamp").ok_or_else(|| TableError::MissingColumn("timestamp".into()))?;
    let col_idx = meta
        .iter()
        .map(|m| find(&m.name).ok_or_else(|| TableError::MissingColumn(m.name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let label_idx = find("label");

    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); meta.len()];
    let mut labels = label_idx.map(|_| Vec::new());

    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |idx: usize| rec.get(idx).unwrap_or("").trim();
        let parse_err = |column: &str, value: &str| TableError::Parse {
            row,
            column: column.to_string(),
            value: value.to_string(),
        };

        let raw_ts = cell(ts_idx);
        let ts = parse_timestamp(raw_ts).ok_or_else(|| parse_err("timestamp", raw_ts))?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(TableError::Order { row });
            }
        }
        timestamps.push(ts);

        for ((m, &idx), col) in meta.iter().zip(&col_idx).zip(columns.iter_mut()) {
            let raw = cell(idx);
            let v: f64 = raw.parse().map_err(|_| parse_err(&m.name, raw))?;
            if !v.is_finite() {
                return Err(parse_err(&m.name, raw));
            }
            col.push(v);
        }

        if let (Some(idx), Some(labels)) = (label_idx, labels.as_mut()) {
            let raw = cell(idx);
            match raw {
                "0" => labels.push(0),
                "1" => labels.push(1),
                _ => return Err(parse_err("label", raw)),
            }
        }
    }

    TimeSeriesTable::new(meta.to_vec(), columns, timestamps, labels)
}

pub fn load_csv_file(
    path: impl AsRef<Path>,
    meta: &[FeatureMeta],
) -> Result<TimeSeriesTable, TableError> {
    load_csv(&std::fs::read(path)?, meta)
}

/// Chronological prefix/suffix split at row `floor(train_fraction * T)`.
pub fn split(
    table: &TimeSeriesTable,
    train_fraction: f64,
) -> Result<(TimeSeriesTable, TimeSeriesTable), TableError> {
    let t = table.len();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TableError::Range(format!(
            "train fraction {train_fraction} is outside (0, 1)"
        )));
    }
    let cut = (train_fraction * t as f64).floor() as usize;
    if cut == 0 || cut >= t {
        return Err(TableError::Range(format!(
            "fraction {train_fraction} of {t} rows leaves an empty split"
        )));
    }
    Ok((table.slice(0..cut)?, table.slice(cut..t)?))
}

/// One maximal run of label-1 rows, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub start: usize,
    pub end: usize,
}

impl Incident {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, row: usize) -> bool {
        self.start <= row && row <= self.end
    }
}

impl fmt::Display for Incident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// Sorted, non-adjacent incidents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IncidentSet {
    incidents: Vec<Incident>,
}

impl IncidentSet {
    pub fn incidents(&self) -> &[Incident] {
        &self.incidents
    }

    pub fn len(&self) -> usize {
        self.incidents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Incident> {
        self.incidents.iter()
    }

    /// Expands back to a 0/1 vector of length `len`.
    pub fn to_labels(&self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        for inc in &self.incidents {
            out[inc.start..=inc.end].fill(1);
        }
        out
    }
}

impl<'a> IntoIterator for &'a IncidentSet {
    type Item = &'a Incident;
    type IntoIter = std::slice::Iter<'a, Incident>;

    fn into_iter(self) -> Self::IntoIter {
        self.incidents.iter()
    }
}

/// Maximal contiguous runs of non-zero entries.
pub fn incidents_from_labels(labels: &[u8]) -> IncidentSet {
    let mut incidents = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                incidents.push(Incident { start: s, end: i - 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        incidents.push(Incident {
            start: s,
            end: labels.len() - 1,
        });
    }
    IncidentSet { incidents }
}
