//! Scenario files, presets, run orchestration, summaries and output files.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod summary;

pub use config::{parse_config, ScenarioConfig, SolverKind};
pub use presets::{preset, PRESETS};
pub use run::{run_scenario, solve, ScenarioRun, Solution};
pub use summary::{summarize, RunSummary};
