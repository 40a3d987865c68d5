//! Run configuration, model dispatch, output files and preset experiments.

pub mod compare;
pub mod config;
pub mod output;
pub mod presets;
pub mod report;
pub mod run;

pub use compare::{compare_models, compare_results, Comparison};
pub use config::{ModelKind, RunConfig};
pub use presets::{run_preset, Preset, PresetOptions, PresetOutcome};
pub use report::{Check, Report};
pub use run::{run_model, RunResult, Snapshot};
