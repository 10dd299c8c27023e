//! Command-line front-end: subcommands, flag overrides and output routing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::presets::{preset, PRESETS};
use crate::run::{run_experiment, CliError};
use crate::spec::{emit_all, flag, parse_raw, to_raw, validate, ConfigError, ExperimentSpec, Mode, RawParams, RawSpec, RawSweep};

#[derive(Debug, Parser)]
#[command(name = "deadline", version, about = "Transmission-probability control for deadline-constrained broadcasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward induction with known contention; writes `t,n,value,p`.
    SolveMdp(ExperimentArgs),
    /// Evaluate one idealized policy; writes `t,n,value,p`.
    EvalPolicy(ExperimentArgs),
    /// Monte Carlo TDR of one or more policies.
    Simulate(ExperimentArgs),
    /// Monte Carlo TDR over a lambda, D or sigma axis.
    Sweep(ExperimentArgs),
    /// Exact and binomial belief traces along a fixed channel history.
    BeliefTrace(ExperimentArgs),
    /// Exact belief-tree solution for tiny instances.
    PomdpOracle(ExperimentArgs),
    /// Per-frame (t, n_t, p_t) sequences of an idealized policy.
    Realizations(ExperimentArgs),
    /// Run every experiment of a config file or preset, whatever its mode.
    Run(ExperimentArgs),
    /// List the presets.
    Presets,
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named experiment bundle (see `deadline presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Model parameters.
    #[arg(long, value_name = "N,D,lambda,sigma")]
    pub params: Option<String>,
    /// optimal | even | approx | heuristic | myopic | static:<p> | static:auto; repeatable or comma-separated.
    #[arg(long = "policy", value_delimiter = ',')]
    pub policies: Vec<String>,
    /// Simulated frames (default 100000; the published figures used 10^7).
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Belief tracker for realistic policies: exact | approx.
    #[arg(long)]
    pub belief: Option<String>,
    /// Action-grid spacing for pomdp-oracle.
    #[arg(long)]
    pub delta_p: Option<f64>,
    /// Output file; a directory when the run has several experiments.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sample receiver success instead of scoring its expectation.
    #[arg(long)]
    pub sample_sigma: bool,
    /// Worker threads for the simulator (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Sweep axis: lambda | D | sigma.
    #[arg(long)]
    pub axis: Option<String>,
    /// Sweep values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Channel history for belief-trace, e.g. 01111001.
    #[arg(long)]
    pub observations: Option<String>,
    /// Force the number of other active nodes in slot 1 (realizations).
    #[arg(long)]
    pub n1: Option<usize>,
    /// Write the pomdp-oracle belief tree as JSON lines.
    #[arg(long)]
    pub tree_dump: Option<PathBuf>,
    /// Experiment name (used for file names in multi-experiment runs).
    #[arg(long)]
    pub name: Option<String>,
    /// Print the resolved config as TOML instead of running it.
    #[arg(long)]
    pub emit_config: bool,
}

fn int_flag(key: &str, value: u64) -> Result<i64, ConfigError> {
    i64::try_from(value).map_err(|_| {
        ConfigError::new(key, format!("value {value} out of range")).with_range(format!("{key} <= {}", i64::MAX))
    })
}

fn parse_params_flag(text: &str) -> Result<RawParams, ConfigError> {
    let bad = || {
        ConfigError::new("--params", format!("expected N,D,lambda,sigma, got `{text}`"))
            .with_range("integers N >= 2, D >= 1; lambda, sigma ∈ (0,1]")
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [n, d, lambda, sigma] = parts.as_slice() else {
        return Err(bad());
    };
    Ok(RawParams {
        nodes: flag(n.parse().map_err(|_| bad())?),
        deadline: flag(d.parse().map_err(|_| bad())?),
        lambda: flag(lambda.parse().map_err(|_| bad())?),
        sigma: flag(sigma.parse().map_err(|_| bad())?),
    })
}

impl ExperimentArgs {
    fn apply(&self, raw: &mut RawSpec) -> Result<(), ConfigError> {
        if let Some(name) = &self.name {
            raw.name = Some(flag(name.clone()));
        }
        if let Some(p) = &self.params {
            raw.params = Some(parse_params_flag(p)?);
        }
        if !self.policies.is_empty() {
            raw.policies = Some(flag(self.policies.clone()));
        }
        if let Some(v) = self.frames {
            raw.frames = Some(flag(int_flag("frames", v)?));
        }
        if let Some(v) = self.seed {
            raw.seed = Some(flag(int_flag("seed", v)?));
        }
        if let Some(v) = &self.belief {
            raw.belief = Some(flag(v.clone()));
        }
        if let Some(v) = self.delta_p {
            raw.delta_p = Some(flag(v));
        }
        if self.sample_sigma {
            raw.sample_sigma = Some(true);
        }
        if let Some(v) = self.threads {
            raw.threads = Some(flag(int_flag("threads", v as u64)?));
        }
        match (&self.axis, self.values.is_empty()) {
            (Some(axis), false) => {
                raw.sweep = Some(RawSweep {
                    axis: flag(axis.clone()),
                    values: flag(self.values.clone()),
                })
            }
            (Some(axis), true) => match &mut raw.sweep {
                Some(s) => s.axis = flag(axis.clone()),
                None => return Err(ConfigError::new("--values", "--axis needs --values")),
            },
            (None, false) => match &mut raw.sweep {
                Some(s) => s.values = flag(self.values.clone()),
                None => return Err(ConfigError::new("--axis", "--values needs --axis")),
            },
            (None, true) => {}
        }
        if let Some(v) = &self.observations {
            raw.observations = Some(flag(v.clone()));
        }
        if let Some(v) = self.n1 {
            raw.n1 = Some(flag(int_flag("n1", v as u64)?));
        }
        if let Some(v) = &self.tree_dump {
            raw.tree_dump = Some(v.display().to_string());
        }
        Ok(())
    }

    /// Builds the validated experiments: base from `--config`, `--preset` or
    /// nothing, then flag overrides, then validation.
    pub fn resolve(&self, mode: Option<Mode>) -> Result<Vec<ExperimentSpec>, ConfigError> {
        let (raws, src) = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("--preset", "use either --config or --preset"))
            }
            (Some(path), None) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    ConfigError::new("--config", format!("cannot read {}: {e}", path.display()))
                })?;
                (parse_raw(&text)?, Some(text))
            }
            (None, Some(name)) => {
                let specs = preset(name).ok_or_else(|| {
                    ConfigError::new("--preset", format!("unknown preset `{name}`"))
                        .with_range(PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(" | "))
                })?;
                (specs.iter().map(to_raw).collect(), None)
            }
            (None, None) => (vec![RawSpec::default()], None),
        };
        raws.into_iter()
            .map(|mut raw| {
                if let (Some(want), Some(have)) = (mode, &raw.mode) {
                    if have.get_ref() != want.as_str() {
                        return Err(ConfigError::new(
                            "mode",
                            format!(
                                "experiment mode `{}` does not match this subcommand ({want}); use `deadline run`",
                                have.get_ref()
                            ),
                        ));
                    }
                }
                self.apply(&mut raw)?;
                validate(&raw, src.as_deref(), mode)
            })
            .collect()
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn output_path(spec: &ExperimentSpec, out: Option<&Path>, several: bool) -> Option<PathBuf> {
    match out {
        Some(dir) if several => Some(dir.join(format!("{}.csv", spec.name))),
        Some(file) => Some(file.to_path_buf()),
        None => spec.out.clone(),
    }
}

/// Runs a parsed command line, writing to `stdout`/`stderr`; returns the
/// process exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let (args, mode) = match cli.command {
        Command::SolveMdp(a) => (a, Some(Mode::Solve)),
        Command::EvalPolicy(a) => (a, Some(Mode::Eval)),
        Command::Simulate(a) => (a, Some(Mode::Simulate)),
        Command::Sweep(a) => (a, Some(Mode::Sweep)),
        Command::BeliefTrace(a) => (a, Some(Mode::BeliefTrace)),
        Command::PomdpOracle(a) => (a, Some(Mode::Pomdp)),
        Command::Realizations(a) => (a, Some(Mode::Realizations)),
        Command::Run(a) => {
            if a.config.is_none() && a.preset.is_none() {
                return Err(ConfigError::new("--config", "`run` needs --config or --preset").into());
            }
            (a, None)
        }
        Command::Presets => {
            for (name, description) in PRESETS {
                let _ = writeln!(stdout, "{name:<16} {description}");
            }
            return Ok(());
        }
    };
    let specs = args.resolve(mode)?;
    if args.emit_config {
        let _ = write!(stdout, "{}", emit_all(&specs));
        return Ok(());
    }
    let several = specs.len() > 1;
    for spec in &specs {
        let outcome = run_experiment(spec)?;
        match output_path(spec, args.out.as_deref(), several) {
            Some(path) => {
                write_file(&path, &outcome.csv)?;
                for line in &outcome.summary {
                    let _ = writeln!(stdout, "{line}");
                }
                let _ = writeln!(stdout, "{}: wrote {}", spec.name, path.display());
            }
            None => {
                let _ = write!(stdout, "{}", outcome.csv);
                for line in &outcome.summary {
                    let _ = writeln!(stderr, "{line}");
                }
            }
        }
    }
    Ok(())
}
