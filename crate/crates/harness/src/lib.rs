//! Experiment harness: configuration, the training loop, evaluation,
//! priority diagnostics, parameter sweeps and the output files they write.

pub mod config;
pub mod diagnose;
pub mod evaluate;
pub mod metrics;
pub mod svg;
pub mod sweep;
pub mod train;

pub use config::{EnvKind, RunConfig, ScenarioFile};
pub use train::{train, train_with, TrainOutcome};
