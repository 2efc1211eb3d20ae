//! Experiment runner for the `mirrorfree` library.
//!
//! Configs describe an instance family, an algorithm, a list of seeds and
//! the checks to run. Each seed writes a deterministic CSV trace plus a
//! wall-time sidecar, and every experiment writes `summary.json`.

pub mod config;
pub mod error;
pub mod runner;
pub mod trace;

pub use config::{default_suite, parse_seeds, Algorithm, Check, ExperimentConfig};
pub use error::{exit_code, HarnessError, Result};
pub use runner::{
    antilip_table, certify_experiment, run_experiment, run_seed, ExperimentSummary, RunStatus, SeedSummary,
};
pub use trace::{read_trace, write_plotdata, TraceRow, TRACE_HEADER};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MFMP_OUT";
/// Output root when neither `--out` nor the environment variable is set.
pub const DEFAULT_OUTPUT_ROOT: &str = "mfmp-out";
