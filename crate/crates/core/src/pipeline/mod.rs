//! Run directories: staged training, evaluation and reports.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::{ExperimentConfig, CONFIG_FILE};
pub use manifest::{sha256_hex, FileEntry, RunManifest, StageRecord, RUN_MANIFEST_FILE};
pub use report::{collect_records, render_svg, write_report, EPISODES_FILE, REPORT_CSV, REPORT_SVG};
pub use stages::{
    ablate_stage, ablation_specs, eval_stage, finetune_stage, gen_data, requirements, run_logs, stage_seed, train_all,
    train_distance_stage, train_skills, Checkpoint, EvalSpec, Run, Stage, StageLosses, ABLATE_DIR, CORPUS_DIR, DEMOS_DIR,
    EVAL_DIR,
};
