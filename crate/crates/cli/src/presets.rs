//! Named experiment bundles for the published table and figures.

use deadline_core::policies::PolicySpec;
use deadline_core::sim::SweepAxis;
use deadline_core::{ModelParams, Observation};

use crate::spec::{ExperimentSpec, Mode, SweepSpec};

/// `(name, description)` of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "table1",
        "belief traces, N=10 D=10 lambda=0.8, observations 01111001, throughput-maximizing p_t",
    ),
    ("fig3", "optimal-policy realizations, D=10, n1 in {30, 50, 100}, 1000 traces each"),
    ("fig4", "optimal-policy realizations, n1=10, D in {30, 50, 100}, 1000 traces each"),
    ("fig5", "lambda sweep 0.10..0.40, N=50 sigma=0.9, D in {10, 20}"),
    ("fig6", "D=30 N=61 sigma=1: optimal value table plus approx and even evaluations"),
    ("fig7", "D sweep 10..20, N=50 lambda=0.25, sigma in {0.8, 1}"),
    ("fig8", "sigma sweep 0.5..1.0, N=50 D=15, lambda in {0.1, 0.4}"),
    ("heur-approx-d30", "D=30 N=61 sigma=1: evaluation of the approximation rule"),
];

/// Observation column of the published belief table.
pub const TABLE1_OBSERVATIONS: &str = "01111001";

const COMPARISON: [PolicySpec; 3] = [PolicySpec::Optimal, PolicySpec::Heuristic, PolicySpec::StaticAuto];

fn params(n: usize, d: usize, lambda: f64, sigma: f64) -> ModelParams {
    ModelParams::new(n, d, lambda, sigma).expect("preset parameters are valid")
}

fn sweep(name: String, base: ModelParams, axis: SweepAxis, values: Vec<f64>) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(name, Mode::Sweep, base);
    spec.policies = COMPARISON.to_vec();
    spec.sweep = Some(SweepSpec { axis, values });
    spec
}

fn realizations(name: String, n1: usize, deadline: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(name, Mode::Realizations, params(n1 + 1, deadline, 1.0, 1.0));
    spec.policies = vec![PolicySpec::Optimal];
    spec.n1 = Some(n1);
    spec.frames = 1000;
    spec
}

fn evaluation(name: &str, policy: PolicySpec) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(name, Mode::Eval, params(61, 30, 1.0, 1.0));
    spec.policies = vec![policy];
    spec
}

fn grid(lo: f64, step: f64, count: usize) -> Vec<f64> {
    // rounded so values print as written (0.15, not 0.15000000000000002)
    (0..count)
        .map(|i| ((lo + step * i as f64) * 1e9).round() / 1e9)
        .collect()
}

/// Expands a preset name.
pub fn preset(name: &str) -> Option<Vec<ExperimentSpec>> {
    Some(match name {
        "table1" => {
            let mut spec = ExperimentSpec::new("table1", Mode::BeliefTrace, params(10, 10, 0.8, 1.0));
            spec.policies = vec![PolicySpec::Myopic];
            spec.observations = TABLE1_OBSERVATIONS
                .bytes()
                .map(|b| Observation::from_bit(b - b'0').expect("0/1"))
                .collect();
            vec![spec]
        }
        "fig3" => [30, 50, 100]
            .into_iter()
            .map(|n1| realizations(format!("fig3-n{n1}"), n1, 10))
            .collect(),
        "fig4" => [30, 50, 100]
            .into_iter()
            .map(|d| realizations(format!("fig4-d{d}"), 10, d))
            .collect(),
        "fig5" => [10, 20]
            .into_iter()
            .map(|d| sweep(format!("fig5-d{d}"), params(50, d, 0.5, 0.9), SweepAxis::Lambda, grid(0.1, 0.05, 7)))
            .collect(),
        "fig6" => {
            let mut solve = ExperimentSpec::new("fig6-optimal", Mode::Solve, params(61, 30, 1.0, 1.0));
            solve.policies = vec![PolicySpec::Optimal];
            vec![
                solve,
                evaluation("fig6-approx", PolicySpec::Approx),
                evaluation("fig6-even", PolicySpec::Even),
            ]
        }
        "fig7" => [(0.8, "08"), (1.0, "1")]
            .into_iter()
            .map(|(sigma, tag)| {
                sweep(
                    format!("fig7-sigma{tag}"),
                    params(50, 10, 0.25, sigma),
                    SweepAxis::Deadline,
                    grid(10.0, 1.0, 11),
                )
            })
            .collect(),
        "fig8" => [(0.1, "01"), (0.4, "04")]
            .into_iter()
            .map(|(lambda, tag)| {
                sweep(
                    format!("fig8-lambda{tag}"),
                    params(50, 15, lambda, 1.0),
                    SweepAxis::Sigma,
                    grid(0.5, 0.1, 6),
                )
            })
            .collect(),
        "heur-approx-d30" => vec![evaluation("heur-approx-d30", PolicySpec::Approx)],
        _ => return None,
    })
}
