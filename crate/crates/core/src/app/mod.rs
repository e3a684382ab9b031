//! Command-line surface: run configuration, stage runner, manifests and report emission.

mod config;
mod manifest;
mod render;
mod stages;

pub use config::RunConfig;
pub use manifest::{fetch, store, ArtifactRef, ExtrapolationSummary, RunManifest, StageRecord, MANIFEST_NAME};
pub use render::{results_table, roc_plots, roc_svg, slug};
pub use stages::{cmd_generate, cmd_report, cmd_run, cmd_stats, stage_status, RunLock, Stage, LOCK_NAME};

/// JSON schema every emitted fairness report satisfies.
pub const FAIRNESS_REPORT_SCHEMA: &str = include_str!("../../schemas/fairness_report.schema.json");
/// JSON schema of `manifest.json`.
pub const RUN_MANIFEST_SCHEMA: &str = include_str!("../../schemas/run_manifest.schema.json");
