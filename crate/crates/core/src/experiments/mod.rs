//! Condition grids, the on-disk results store, reports and plots.
//!
//! A grid run lays out one directory per condition cell:
//!
//! ```text
//! <out>/store.json                      manifest: config, provenance, cell status
//! <out>/cells/<cell>/cell.json          CKA curves and statistics, probe sweeps
//! <out>/cells/<cell>/dialogues/seed<s>/ trace files, segments.jsonl, cka.csv
//! ```

mod config;
mod report;
mod run;
mod store;
pub mod svg;

pub use config::{CellKey, ExperimentConfig, GridSpec, Plan, ProbeSettings};
pub use report::{
    emit_report, CkaGroupSummary, CkaPanelSummary, Manipulation, ProbeTrendSummary,
    ReportOptions, ReportSummary,
};
pub use run::{curve_csv, run_grid, worker_count, CellFailure, GridOutcome, RunOptions, WORKERS_ENV};
pub use store::{
    cell_dir, CellResult, CellState, CellStatus, DialogueRecord, ResultsStore, StoreManifest,
    CELL_RESULT, STORE_MANIFEST,
};
