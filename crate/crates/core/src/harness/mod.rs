//! Benchmark orchestration: configuration, data acquisition, the model grid,
//! persistence and result tables.

pub mod config;
pub mod fetch;
pub mod metrics;
pub mod models;
pub mod report;
pub mod run;
pub mod selftest;
pub mod surrogate;
pub mod table;

pub use config::{CellKey, RunConfig};
pub use models::{fit_model, FittedModel, Hyper, ModelId, ModelRecord};
pub use report::{load_reports, CellStatus, EvalReport, ReportStore, TestScore};
pub use run::{run_benchmark, run_cell, CellOptions};
pub use selftest::{run_selftest, Check};
pub use surrogate::{write_surrogates, SurrogateScale};
pub use table::{emit_table, format_score, write_table, TableFormat};
