//! Command-line harness: dataset generation, experiment execution, result
//! aggregation, and checkpoint evaluation. Every run directory is
//! self-describing (canonical config echo + dataset content hash) and
//! reproduces byte-identically from its echo.

pub mod config;
pub mod report;
pub mod runner;
