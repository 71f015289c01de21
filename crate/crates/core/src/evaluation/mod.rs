//! ANMRR and mAP scoring of retrieval runs.

mod metrics;
mod report;

pub use metrics::{average_precision, nmrr};
pub use report::{evaluate_run, ClassScore, EvalReport, QueryScore};
