//! Evolutionary search for interpretable anomaly-detection rules over
//! building HVAC time series, with a language model proposing, recombining
//! and mutating candidate rules.
//!
//! Rules are small programs in a sandboxed DSL ([`dsl`]) scored by
//! event-level F1 with point adjustment ([`metrics`]). The search loop lives
//! in [`evolution`], talks to a model through the [`llm::Provider`] trait
//! and renders its requests from the templates in [`prompts`]. Every run is
//! recorded by [`report::RunLog`] and summarised in a diagnostic report.
//!
//! ```
//! use pillm::{dsl, metrics};
//! use pillm::synth::{faulted_corpus, FaultKind, FaultSpec, SimConfig};
//!
//! let table = faulted_corpus(&SimConfig::with_seed(42), &FaultSpec::new(FaultKind::SensorBias, 1.0, 1000..1400)).unwrap();
//! let rule = dsl::compile("return zscore($zone_temp, 60) > 3", table.feature_names()).unwrap();
//! let flags = dsl::to_flags(&dsl::evaluate(&rule, &table).unwrap(), dsl::DEFAULT_THRESHOLD);
//! let score = metrics::event_f1_pa(&flags, table.labels().unwrap()).unwrap();
//! assert!(score.f1 >= 0.9);
//! ```

pub mod dsl;
pub mod evolution;
pub mod llm;
pub mod metrics;
pub mod prompts;
pub mod report;
pub mod synth;
pub mod timeseries;
pub mod workflow;
