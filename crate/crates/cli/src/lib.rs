//! Scenario files, built-in case studies and the run pipeline behind the
//! `flowreg` command.

pub mod presets;
pub mod runner;
pub mod scenario;

pub use scenario::{Prepared, Scenario, ScenarioError};
