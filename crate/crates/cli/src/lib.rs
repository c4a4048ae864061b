//! Scenario runner behind the `singlab` command.

pub mod config;
pub mod plots;
pub mod scenario;

pub use config::{ConfigError, ScenarioConfig, ScenarioName};
pub use plots::emit_plots;
pub use scenario::{run_scenario, Check, ScenarioReport};
