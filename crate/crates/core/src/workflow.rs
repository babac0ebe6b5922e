//! Glue shared by the command-line tool and the examples: provider
//! construction, run directories, and report regeneration.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evolution::{run_evolution, ConfigError, EvolutionConfig, EvolutionError, RunResult};
use crate::llm::{HttpProvider, Provider, ProviderError, ProviderKind, SamplerProvider, ScriptedProvider};
use crate::prompts::PromptSet;
use crate::report::{
    generate_report, narrate, LogRecord, ReportError, RunLog, BEST_FILE, CONFIG_FILE, REPORT_FILE,
    TRAIN_FILE,
};
use crate::timeseries::{split, TableError, TimeSeriesTable};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Usage(String),
}

impl WorkflowError {
    /// True for problems with the run configuration or provider setup.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            WorkflowError::Config(_)
                | WorkflowError::Provider(ProviderError::Config(_))
                | WorkflowError::Evolution(EvolutionError::Config(_))
        )
    }
}

/// Builds the requested backend. The sampler is seeded from the config.
pub fn build_provider(
    kind: ProviderKind,
    cfg: &EvolutionConfig,
    script: Option<&Path>,
    features: &[String],
) -> Result<Box<dyn Provider>, WorkflowError> {
    Ok(match kind {
        ProviderKind::Http => {
            let block = cfg.provider.clone().ok_or_else(|| {
                ConfigError::Invalid("the http provider needs a [provider] table in the config".into())
            })?;
            Box::new(HttpProvider::from_env(block)?)
        }
        ProviderKind::Scripted => {
            let path = script
                .ok_or_else(|| WorkflowError::Usage("--script is required for the scripted provider".into()))?;
            Box::new(ScriptedProvider::from_file(path)?)
        }
        ProviderKind::Sampler => Box::new(SamplerProvider::new(cfg.seed, features.iter().cloned())),
    })
}

pub struct EvolveOutcome {
    pub run_dir: PathBuf,
    pub result: RunResult,
    pub log: RunLog,
    pub report: String,
}

/// Splits `table`, evolves on the training part inside a fresh run
/// directory under `out`, and writes `best.rule` and `report.txt`.
pub fn evolve_to_dir(
    cfg: &EvolutionConfig,
    table: &TimeSeriesTable,
    provider: &dyn Provider,
    prompts: &PromptSet,
    out: &Path,
    run_id: &str,
) -> Result<EvolveOutcome, WorkflowError> {
    cfg.validate()?;
    let (train, test) = split(table, cfg.train_fraction)?;
    let mut log = RunLog::create(out, run_id)?;
    log.write_file(CONFIG_FILE, &cfg.to_toml())?;
    log.write_file(TRAIN_FILE, &train.to_csv_string())?;
    let result = run_evolution(cfg, &train, provider, prompts, &mut log)?;
    let best = &result.best;
    log.write_file(BEST_FILE, &format!("{}\n", best.code.trim()))?;
    let report = if best.is_valid() {
        generate_report(&best.code, &best.context, &train, &test, cfg.threshold)?.render()
    } else {
        "No valid rule was produced; no report available.\n".to_string()
    };
    log.write_file(REPORT_FILE, &report)?;
    let run_dir = out.join(run_id);
    Ok(EvolveOutcome {
        run_dir,
        result,
        log,
        report,
    })
}

/// Highest-fitness valid record; ties go to the earliest.
pub fn best_record(records: &[LogRecord]) -> Option<&LogRecord> {
    records
        .iter()
        .filter(|r| r.fitness.is_some())
        .min_by(|a, b| match b.fitness.partial_cmp(&a.fitness) {
            Some(Ordering::Equal) | None => Ordering::Equal,
            Some(o) => o,
        })
}

/// Rebuilds `report.txt` for a finished run from the full data table,
/// optionally passing it through `narrator`.
pub fn report_run(
    run_dir: &Path,
    table: &TimeSeriesTable,
    narrator: Option<&dyn Provider>,
) -> Result<String, WorkflowError> {
    let cfg = EvolutionConfig::load(run_dir.join(CONFIG_FILE))?;
    let log = RunLog::load(run_dir)?;
    let best = best_record(log.records())
        .ok_or_else(|| WorkflowError::Usage(format!("{} has no valid candidate", run_dir.display())))?;
    let (train, test) = split(table, cfg.train_fraction)?;
    let mut text = generate_report(&best.code, &best.context, &train, &test, cfg.threshold)?.render();
    if let Some(p) = narrator {
        text = narrate(&text, p)?;
    }
    std::fs::write(run_dir.join(REPORT_FILE), &text)
        .map_err(|e| ReportError::Io { path: run_dir.join(REPORT_FILE).display().to_string(), source: e })?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::code_hash;

    fn rec(id: &str, fitness: Option<f64>) -> LogRecord {
        LogRecord {
            generation: 0,
            candidate_id: id.into(),
            parent_ids: vec![],
            operator: "init".into(),
            code: String::new(),
            context: String::new(),
            code_hash: code_hash(""),
            fitness,
            precision: None,
            recall: None,
            request_tags_used: vec![],
            error: None,
        }
    }

    #[test]
    fn best_record_prefers_earliest_of_ties() {
        let rs = [rec("a", Some(0.2)), rec("b", None), rec("c", Some(0.7)), rec("d", Some(0.7))];
        assert_eq!(best_record(&rs).unwrap().candidate_id, "c");
        assert!(best_record(&rs[1..2]).is_none());
    }

    #[test]
    fn http_without_provider_block_is_a_config_error() {
        let err = build_provider(ProviderKind::Http, &EvolutionConfig::default(), None, &[]).err().unwrap();
        assert!(err.is_config_error());
    }
}
