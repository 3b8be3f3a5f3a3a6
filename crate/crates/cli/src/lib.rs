//! Configuration, file formats, and orchestration behind the `contactflow`
//! command.

pub mod app;
pub mod config;
pub mod format;

pub use app::{compare, diagnose, list_profiles, run, ExitStatus, Outcome, Solver};
pub use config::{ConfigError, Overrides, SolverConfig};
