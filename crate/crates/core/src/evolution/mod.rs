//! The evolutionary loop: an initial population seeded from a baseline
//! rule, then per generation pairwise reflection, reflection-guided
//! crossover, and mutation of the elites.

mod config;
mod engine;
mod ops;

use thiserror::Error;

pub use config::{ConfigError, EvolutionConfig};
pub use engine::{run_evolution, RunResult, NO_REFLECTION};
pub use ops::{
    long_term_reflection, rank, select_pairs, split_reflection, survivors, Operator, Reflection,
    RuleCandidate, NO_REFLECTIONS,
};

use crate::prompts::PromptError;
use crate::report::ReportError;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Log(#[from] ReportError),
}
