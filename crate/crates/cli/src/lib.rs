//! File-staged pipeline behind the `sentifuse` binary.
//!
//! Stages communicate only through files in the output directory:
//! `ingest` writes `corpus.csv`, `classify` writes one verdict store per
//! backend under `verdicts/`, `fuse` writes `fused.csv`, and `score`,
//! `evaluate` and `report` read those.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

pub use commands::{
    cmd_classify, cmd_evaluate, cmd_fuse, cmd_ingest, cmd_report, cmd_score, cmd_simulate, SimulateOptions,
};
pub use config::RunConfig;
pub use error::CliError;
