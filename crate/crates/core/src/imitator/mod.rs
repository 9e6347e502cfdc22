//! Evaluation loop, baseline and ablation policies, and episode statistics.

pub mod bc;
pub mod episode;
pub mod eval;

pub use bc::{finetune_bc, fit_bc, pretrain_bc, train_bc, train_goal_bc, BcConfig, BcKind, BcLog, BcPolicy};
pub use episode::{
    run_episode, run_fist_episode, run_spirl_episode, Agent, BcAgent, Conditioning, EpisodeResult, SkillAgent,
    SpirlLookup, Task,
};
pub use eval::{
    episode_rng, eval_starts, evaluate, evaluate_parallel, normalized_score, parse_jsonl, records_to_jsonl, rows_to_csv,
    summarize_records, Artifacts, EpisodeRecord, EvalConfig, EvalReport, PolicyKind, ReportRow, CSV_HEADER,
};
