//! Command-line front end: scenario files, run orchestration and artifacts.

pub mod config;
pub mod run;
pub mod snapshot;
pub mod verify;
