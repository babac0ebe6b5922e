use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ReportError;
use crate::llm::RequestTag;

pub const RECORDS_FILE: &str = "run.jsonl";
pub const REQUESTS_FILE: &str = "requests.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const CONFIG_FILE: &str = "config.snapshot";
pub const BEST_FILE: &str = "best.rule";
pub const REPORT_FILE: &str = "report.txt";
pub const TRAIN_FILE: &str = "train.csv";

/// Hex SHA-256 of the rule text.
pub fn code_hash(code: &str) -> String {
    hex::encode(Sha256::digest(code.as_bytes()))
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub generation: usize,
    pub candidate_id: String,
    pub parent_ids: Vec<String>,
    pub operator: String,
    pub code: String,
    pub context: String,
    pub code_hash: String,
    /// `None` marks an invalid candidate.
    pub fitness: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub request_tags_used: Vec<RequestTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEntry {
    pub seq: usize,
    pub generation: usize,
    pub tag: RequestTag,
    pub provider_id: String,
    pub attempt: u32,
    pub latency_ms: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// State after a generation's survivor selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub population: Vec<String>,
    pub best_id: Option<String>,
    pub best_fitness: Option<f64>,
    pub best_ever_id: Option<String>,
    pub best_ever_fitness: Option<f64>,
}

struct Sinks {
    dir: PathBuf,
    records: File,
    requests: File,
    generations: File,
}

/// Append-only record of a run. Each line is synced to disk before the
/// append call returns; a log without a directory keeps everything in memory.
pub struct RunLog {
    run_id: String,
    sinks: Option<Sinks>,
    seen: HashSet<String>,
    records: Vec<LogRecord>,
    requests: Vec<RequestEntry>,
    generations: Vec<GenerationSummary>,
}

fn open_append(path: &Path) -> Result<File, ReportError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ReportError::io(path, e))
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<(), ReportError> {
    let mut line = serde_json::to_string(value).expect("log entries serialize");
    line.push('\n');
    file.write_all(line.as_bytes())
        .and_then(|_| file.flush())
        .and_then(|_| file.sync_data())
        .map_err(|e| ReportError::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ReportError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).map_err(|e| ReportError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| ReportError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReportError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl RunLog {
    pub fn in_memory(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            sinks: None,
            seen: HashSet::new(),
            records: Vec::new(),
            requests: Vec::new(),
            generations: Vec::new(),
        }
    }

    /// Creates `<root>/<run_id>/`. Refuses to reuse a directory that
    /// already holds a run.
    pub fn create(root: impl AsRef<Path>, run_id: impl Into<String>) -> Result<Self, ReportError> {
        let run_id = run_id.into();
        let dir = root.as_ref().join(&run_id);
        std::fs::create_dir_all(&dir).map_err(|e| ReportError::io(&dir, e))?;
        if dir.join(RECORDS_FILE).exists() {
            return Err(ReportError::RunExists(dir.display().to_string()));
        }
        let sinks = Sinks {
            records: open_append(&dir.join(RECORDS_FILE))?,
            requests: open_append(&dir.join(REQUESTS_FILE))?,
            generations: open_append(&dir.join(GENERATIONS_FILE))?,
            dir,
        };
        Ok(Self {
            sinks: Some(sinks),
            ..Self::in_memory(run_id)
        })
    }

    /// Reads a finished (or crashed) run back from its directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ReportError> {
        let dir = dir.as_ref();
        let records: Vec<LogRecord> = read_lines(&dir.join(RECORDS_FILE))?;
        if records.is_empty() && !dir.join(RECORDS_FILE).exists() {
            return Err(ReportError::io(
                &dir.join(RECORDS_FILE),
                std::io::Error::from(std::io::ErrorKind::NotFound),
            ));
        }
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            run_id,
            sinks: None,
            seen: records.iter().map(|r| r.candidate_id.clone()).collect(),
            records,
            requests: read_lines(&dir.join(REQUESTS_FILE))?,
            generations: read_lines(&dir.join(GENERATIONS_FILE))?,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> Option<&Path> {
        self.sinks.as_ref().map(|s| s.dir.as_path())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn requests(&self) -> &[RequestEntry] {
        &self.requests
    }

    pub fn generations(&self) -> &[GenerationSummary] {
        &self.generations
    }

    pub fn append_record(&mut self, record: LogRecord) -> Result<(), ReportError> {
        if !self.seen.insert(record.candidate_id.clone()) {
            return Err(ReportError::DuplicateRecord(record.candidate_id));
        }
        if let Some(s) = &mut self.sinks {
            let path = s.dir.join(RECORDS_FILE);
            if let Err(e) = append_line(&mut s.records, &path, &record) {
                self.seen.remove(&record.candidate_id);
                return Err(e);
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn append_request(&mut self, entry: RequestEntry) -> Result<(), ReportError> {
        if let Some(s) = &mut self.sinks {
            let path = s.dir.join(REQUESTS_FILE);
            append_line(&mut s.requests, &path, &entry)?;
        }
        self.requests.push(entry);
        Ok(())
    }

    pub fn append_generation(&mut self, summary: GenerationSummary) -> Result<(), ReportError> {
        if let Some(s) = &mut self.sinks {
            let path = s.dir.join(GENERATIONS_FILE);
            append_line(&mut s.generations, &path, &summary)?;
        }
        self.generations.push(summary);
        Ok(())
    }

    /// Writes a named side file into the run directory (no-op in memory).
    pub fn write_file(&self, name: &str, contents: &str) -> Result<(), ReportError> {
        if let Some(s) = &self.sinks {
            let path = s.dir.join(name);
            std::fs::write(&path, contents).map_err(|e| ReportError::io(&path, e))?;
        }
        Ok(())
    }

    /// Tags of every request issued, in issue order.
    pub fn request_tags(&self) -> impl Iterator<Item = RequestTag> + '_ {
        self.requests.iter().map(|r| r.tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> LogRecord {
        LogRecord {
            generation: 0,
            candidate_id: id.into(),
            parent_ids: vec![],
            operator: "seed".into(),
            code: "return $a > 1".into(),
            context: "c".into(),
            code_hash: code_hash("return $a > 1"),
            fitness: Some(0.5),
            precision: Some(0.5),
            recall: Some(0.5),
            request_tags_used: vec![],
            error: None,
        }
    }

    #[test]
    fn hash_is_stable_hex() {
        assert_eq!(
            code_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn one_line_per_record_in_order() {
        let root = tempfile::tempdir().unwrap();
        let mut log = RunLog::create(root.path(), "r1").unwrap();
        log.append_record(record("c0")).unwrap();
        let text = std::fs::read_to_string(root.path().join("r1").join(RECORDS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        for i in 1..100 {
            log.append_record(record(&format!("c{i}"))).unwrap();
        }
        let back = RunLog::load(root.path().join("r1")).unwrap();
        assert_eq!(back.records().len(), 100);
        assert_eq!(back.records()[57].candidate_id, "c57");
        assert_eq!(back.records(), log.records());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut log = RunLog::in_memory("x");
        log.append_record(record("c0")).unwrap();
        let err = log.append_record(record("c0")).unwrap_err();
        assert!(matches!(err, ReportError::DuplicateRecord(id) if id == "c0"));
        assert_eq!(log.records().len(), 1);
    }

    #[test]
    fn existing_run_is_not_overwritten() {
        let root = tempfile::tempdir().unwrap();
        let mut log = RunLog::create(root.path(), "r").unwrap();
        log.append_record(record("c0")).unwrap();
        assert!(matches!(RunLog::create(root.path(), "r"), Err(ReportError::RunExists(_))));
    }

    #[test]
    fn invalid_fitness_round_trips_as_null() {
        let mut r = record("c1");
        r.fitness = None;
        r.error = Some("no fenced code block in response".into());
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"fitness\":null"));
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), r);
    }
}
