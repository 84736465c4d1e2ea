//! Experiment plumbing: file formats, scenarios, the view-control
//! evaluation protocol, the ablation grid and online bias probes.
//!
//! Everything here is deterministic in the master seed of an
//! [`ExperimentConfig`]; the `spnpb` binary is a thin layer over it.

mod config;
mod eval;
mod formats;
mod report;
mod scenario;
mod text;

pub use config::ExperimentConfig;
pub use eval::{
    eval_with, nearest_bias, run_ablation, run_eval, run_eval_sim, run_eval_with_bias, run_update,
    train_checkpoint, AblationReport, EvalEntry, EvalReport, SimObjective, TrainedVariant,
    UpdateRun, UpdateStep,
};
pub use formats::{
    check_label, load_trial, save_trial, trial_from_text, trial_to_text, Checkpoint,
    CHECKPOINT_MAGIC, FORMAT_VERSION, TRIAL_MAGIC,
};
pub use report::{
    ablation_tsv, eval_entries_tsv, eval_summary_tsv, pca_tsv, train_report_tsv, update_run_tsv,
};
pub use scenario::{RegimeSpec, Scenario};
pub use text::fmt_f64;
