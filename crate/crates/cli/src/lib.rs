//! Scenario runner: reads a JSON scenario, evolves the input through every
//! requested route and cross-checks the results.

pub mod config;
pub mod error;
pub mod format;
pub mod scenario;

pub use config::{parse_config, ConfigFile, InputSpec, OutputKind, Route, ScenarioConfig};
pub use error::{exit, CliError};
pub use scenario::{evaluate, run_scenario, write_outputs, EvolutionReport, Status};
