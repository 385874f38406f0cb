//! Experiment presets, configuration layering, and result files.

mod config;
mod run;

pub use config::{parse_config, ExperimentConfig, PoolRow, PresetName, FCM_MIN_ITERS};
pub use run::{
    execute_preset, group_seed, load_summary, rebuild_summary, run_preset, summarize, write_bundle, FcmStats,
    GroupKind, GroupSummary, ResultBundle, RunOutput, RunRecord, Stats, Summary, SUMMARY_FILE,
};
