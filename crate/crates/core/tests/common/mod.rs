#![allow(dead_code)]

use std::path::PathBuf;

use pillm::synth::{faulted_corpus, FaultKind, FaultSpec, SimConfig, Simulator};
use pillm::timeseries::TimeSeriesTable;

/// Seed-42 zone with a sensor bias episode in each half of the series.
pub fn two_incident_corpus() -> TimeSeriesTable {
    let cfg = SimConfig::with_seed(42);
    let first = faulted_corpus(&cfg, &FaultSpec::new(FaultKind::SensorBias, 1.0, 600..900)).unwrap();
    Simulator::new(cfg)
        .unwrap()
        .inject_fault(&first, &FaultSpec::new(FaultKind::SensorBias, 1.0, 2000..2300))
        .unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn feature_names(table: &TimeSeriesTable) -> Vec<String> {
    table.feature_names().map(String::from).collect()
}
