//! Batch front end for the `nqs-core` engine.
//!
//! A run loads a scenario document ([`scenario`]), executes its tasks
//! ([`tasks`]) and renders a report ([`report`]). [`app`] wires these to the
//! `nqs-geom` command line.

pub mod app;
pub mod error;
pub mod report;
pub mod scenario;
pub mod tasks;

pub use error::{CliError, CliResult};
pub use report::{Format, Report};
pub use scenario::{load_scenario, Scenario};
pub use tasks::run_scenario;
