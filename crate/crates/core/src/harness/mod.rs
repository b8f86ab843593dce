//! Configuration, convergence sweeps and table output.

pub mod cli;
pub mod config;
pub mod output;
pub mod sweep;

pub use cli::{cli_main, run_config, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
pub use config::{InjectionPreset, Lambda0Mode, Outputs, RunConfig, Scheme};
pub use output::{emit_csv, emit_markdown};
pub use sweep::{convergence_rows, run_level, run_stability_level, run_stability_sweep, run_sweep, ConvergenceRow, LevelRun, StabilityRun};
