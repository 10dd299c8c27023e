//! Batch experiment front-end for the `deadline` tool: TOML experiment specs,
//! presets for the published table and figures, and CSV output.

pub mod cli;
pub mod presets;
pub mod run;
pub mod spec;

pub use cli::{execute, Cli};
pub use run::{run_experiment, CliError, Outcome};
pub use spec::{emit, emit_all, parse_spec, ConfigError, ExperimentSpec, Mode, SweepSpec};
