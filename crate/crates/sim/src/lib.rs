//! Scenario runner for the qcoop simulator: TOML scenarios in, JSON/CSV
//! reports and NDJSON event logs out.

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;
pub mod selftest;
pub mod sweep;
pub mod table1;

pub use error::HarnessError;
pub use report::{write_report, Event, Format, RunOutput, RunStatus, SimulationReport};
pub use run::run_scenario;
pub use scenario::{load_scenario, parse_scenario, Experiment, Scenario};
