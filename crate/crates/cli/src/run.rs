//! Executes validated experiments.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use deadline_core::belief::{belief_divergence, trace_beliefs, write_trace_csv};
use deadline_core::mdp::{analytic_tdr, evaluate_policy, solve_optimal};
use deadline_core::optimize::DEFAULT_TOL;
use deadline_core::policies::decide_realistic;
use deadline_core::pomdp::{solve_pomdp, DiscretizedActions, PomdpLimits};
use deadline_core::sim::{
    run, run_sweep, trace_realizations, write_results_csv, write_traces_csv, SimConfig,
};
use deadline_core::Error as CoreError;

use crate::spec::{ConfigError, ExperimentSpec, Mode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A library error, tagged with the module that raised it.
    #[error("{module}: {source}")]
    Runtime {
        module: &'static str,
        source: CoreError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime { .. } | CliError::Io { .. } => 3,
        }
    }
}

fn from(module: &'static str) -> impl Fn(CoreError) -> CliError {
    move |source| CliError::Runtime { module, source }
}

/// CSV text plus one human-readable line per result row.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub summary: Vec<String>,
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> deadline_core::Result<()>, module: &'static str) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(from(module))?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

fn sim_config(spec: &ExperimentSpec, policy: deadline_core::policies::PolicyKind) -> SimConfig {
    SimConfig {
        belief_mode: spec.belief,
        sample_sigma: spec.sample_sigma,
        threads: spec.threads,
        ..SimConfig::new(spec.params, policy, spec.frames, spec.seed)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let params = &spec.params;
    let tag = &spec.name;
    match spec.mode {
        Mode::Solve => {
            let table = solve_optimal(params, DEFAULT_TOL).map_err(from("mdp"))?;
            let tdr = analytic_tdr(params, &table).map_err(from("mdp"))?;
            Ok(Outcome {
                csv: csv_text(|b| table.write_csv(b), "mdp")?,
                summary: vec![format!("{tag}: optimal {params} analytic TDR {tdr:.6}")],
            })
        }
        Mode::Eval => {
            let policy = spec.policies[0];
            let kind = policy.resolve(params).map_err(from("policies"))?;
            let matrix = kind.idealized_matrix(params).map_err(from("policies"))?;
            let table = evaluate_policy(params, &matrix).map_err(from("mdp"))?;
            let tdr = analytic_tdr(params, &table).map_err(from("mdp"))?;
            Ok(Outcome {
                csv: csv_text(|b| table.write_csv(b), "mdp")?,
                summary: vec![format!("{tag}: {policy} {params} analytic TDR {tdr:.6}")],
            })
        }
        Mode::Simulate => {
            let mut csv = String::from("axis,value,policy,tdr,stderr,frames,seed\n");
            let mut summary = Vec::new();
            for policy in &spec.policies {
                let kind = policy.resolve(params).map_err(from("policies"))?;
                let est = run(&sim_config(spec, kind)).map_err(from("sim"))?;
                csv.push_str(&format!(
                    "none,,{policy},{},{},{},{}\n",
                    est.tdr, est.stderr, est.frames, spec.seed
                ));
                summary.push(format!(
                    "{tag}: {policy} {params} TDR {:.6} ± {:.6} ({} frames)",
                    est.tdr, est.stderr, est.frames
                ));
            }
            Ok(Outcome { csv, summary })
        }
        Mode::Sweep => {
            let sweep = spec.sweep.as_ref().expect("validated sweep spec");
            let base = sim_config(spec, deadline_core::policies::PolicyKind::Even);
            let rows = run_sweep(&base, sweep.axis, &sweep.values, &spec.policies).map_err(from("sim"))?;
            let summary = rows
                .iter()
                .map(|r| {
                    format!(
                        "{tag}: {}={} {} TDR {:.6} ± {:.6}",
                        r.axis.as_str(),
                        r.value,
                        r.policy,
                        r.estimate.tdr,
                        r.estimate.stderr
                    )
                })
                .collect();
            Ok(Outcome {
                csv: csv_text(|b| write_results_csv(b, &rows), "sim")?,
                summary,
            })
        }
        Mode::BeliefTrace => {
            let kind = spec.policies[0].resolve(params).map_err(from("policies"))?;
            let rows = trace_beliefs(params, &spec.observations, |t, bb| {
                decide_realistic(&kind, t, bb, params)
            })
            .map_err(from("belief"))?;
            let mut summary = Vec::with_capacity(rows.len());
            for row in &rows {
                let gap = belief_divergence(&row.exact, &row.approx_expanded).map_err(from("belief"))?;
                summary.push(format!(
                    "{tag}: t={} o={} p={:.6} M={} alpha={:.6} TV(exact, approx)={gap:.6}",
                    row.t,
                    row.observation.bit(),
                    row.prob,
                    row.approx.trials,
                    row.approx.prob
                ));
            }
            Ok(Outcome {
                csv: csv_text(|b| write_trace_csv(b, params.belief_width(), &rows), "belief")?,
                summary,
            })
        }
        Mode::Pomdp => {
            let actions = DiscretizedActions::new(spec.delta_p).map_err(from("pomdp_oracle"))?;
            let sol = solve_pomdp(params, &actions, &PomdpLimits::default()).map_err(from("pomdp_oracle"))?;
            if let Some(path) = &spec.tree_dump {
                let file = File::create(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                sol.write_jsonl(BufWriter::new(file)).map_err(from("pomdp_oracle"))?;
            }
            let csv = format!(
                "N,D,lambda,sigma,delta_p,value,best_action,nodes\n{},{},{},{},{},{},{},{}\n",
                params.nodes,
                params.deadline,
                params.lambda,
                params.sigma,
                spec.delta_p,
                sol.root.value,
                sol.root.best_action,
                sol.nodes.len()
            );
            Ok(Outcome {
                csv,
                summary: vec![format!(
                    "{tag}: {params} delta_p={} root value {:.6} at p={} ({} beliefs)",
                    spec.delta_p,
                    sol.root.value,
                    sol.root.best_action,
                    sol.nodes.len()
                )],
            })
        }
        Mode::Realizations => {
            let kind = spec.policies[0].resolve(params).map_err(from("policies"))?;
            let traces = trace_realizations(params, &kind, spec.frames, spec.seed, spec.n1).map_err(from("sim"))?;
            let steps: usize = traces.iter().map(|t| t.steps.len()).sum();
            Ok(Outcome {
                csv: csv_text(|b| write_traces_csv(b, &traces), "sim")?,
                summary: vec![format!(
                    "{tag}: {} traces, {steps} slot decisions ({} {params})",
                    traces.len(),
                    spec.policies[0]
                )],
            })
        }
    }
}
