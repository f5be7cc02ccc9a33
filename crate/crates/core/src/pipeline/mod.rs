//! Configuration, the three training stages, evaluation and reporting.

pub mod config;
pub mod report;
pub mod stages;
pub mod suite;

pub use config::{AdaptationConfig, DataKind, DATA_ROOT_ENV};
pub use report::{write_summary_csv, EpochRecord, StageReport, SummaryRow};
pub use stages::{
    accuracy, evaluate, evaluate_network, full_pass, run_ablation, run_stage1, run_stage2,
    run_stage3, score_predictions, AblationRow, AblationTable, ComponentMask, EvalResult,
    Stage2Output,
};
pub use suite::load_domains;
