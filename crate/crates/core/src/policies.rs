//! Transmission-probability schemes for both environments.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{ActivityBelief, BinomialBelief};
use crate::error::{check_probability, Error, Result};
use crate::mdp::{analytic_tdr, evaluate_policy, solve_optimal, IdealizedPolicy, ValueTable};
use crate::model::{reward, ModelParams, SlotIndex};
use crate::optimize::{golden_section, maximize_unit, DEFAULT_TOL};

/// Which knowledge a policy decides from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    /// The exact count of other active nodes.
    Idealized,
    /// Only the shared channel history, summarized as a belief.
    Realistic,
    /// Nothing at all (constant probability).
    Either,
}

/// A resolved decision rule.
#[derive(Debug, Clone)]
pub enum PolicyKind {
    OptimalIdealized(Arc<ValueTable>),
    /// `1/(D-t+1)`: spread the backlog evenly over the remaining slots.
    Even,
    /// `1/(n+1)` under heavy contention or in the last slot, `1/(D-t+1)` otherwise.
    ApproxIdealized,
    /// The approximation rule driven by the binomial belief's mean `M alpha`.
    HeuristicRealistic,
    /// Throughput-maximizing probability in every slot: `1/(n+1)` with known
    /// contention, `min(1/((M+1)alpha), 1)` with a binomial belief.
    Myopic,
    Static(f64),
}

impl PolicyKind {
    pub fn environment(&self) -> Environment {
        match self {
            PolicyKind::OptimalIdealized(_) | PolicyKind::Even | PolicyKind::ApproxIdealized => {
                Environment::Idealized
            }
            PolicyKind::HeuristicRealistic | PolicyKind::Myopic => Environment::Realistic,
            PolicyKind::Static(_) => Environment::Either,
        }
    }

    pub fn name(&self) -> String {
        match self {
            PolicyKind::OptimalIdealized(_) => "optimal".into(),
            PolicyKind::Even => "even".into(),
            PolicyKind::ApproxIdealized => "approx".into(),
            PolicyKind::HeuristicRealistic => "heuristic".into(),
            PolicyKind::Myopic => "myopic".into(),
            PolicyKind::Static(p) => format!("static:{p}"),
        }
    }

    /// The full `(t, n)` probability matrix of a policy usable with known
    /// contention. Myopic counts as idealized here (`1/(n+1)`).
    pub fn idealized_matrix(&self, params: &ModelParams) -> Result<IdealizedPolicy> {
        let mut failure = None;
        let policy = IdealizedPolicy::from_fn(params, |t, n| {
            let slot = SlotIndex::new(t, params.deadline).expect("t within 1..=D");
            decide_idealized(self, slot, n, params).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(policy),
        }
    }
}

fn wrong_env(kind: &PolicyKind, environment: &'static str) -> Error {
    Error::WrongEnvironment {
        policy: kind.name(),
        environment,
    }
}

/// Probability used at slot `t` when exactly `n` other nodes are active.
pub fn decide_idealized(
    kind: &PolicyKind,
    t: SlotIndex,
    n: usize,
    params: &ModelParams,
) -> Result<f64> {
    let remaining = params.remaining_slots(t);
    let inverse_contention = 1.0 / (n as f64 + 1.0);
    Ok(match kind {
        PolicyKind::OptimalIdealized(table) => table.prob(t.get(), n),
        PolicyKind::Even => 1.0 / remaining as f64,
        PolicyKind::ApproxIdealized => {
            if n + 1 > remaining || t.is_last(params.deadline) {
                inverse_contention
            } else {
                1.0 / remaining as f64
            }
        }
        PolicyKind::Myopic => inverse_contention,
        PolicyKind::Static(p) => *p,
        PolicyKind::HeuristicRealistic => return Err(wrong_env(kind, "idealized")),
    })
}

/// Probability used at slot `t` given the binomial belief `bb`.
pub fn decide_realistic(
    kind: &PolicyKind,
    t: SlotIndex,
    bb: &BinomialBelief,
    params: &ModelParams,
) -> Result<f64> {
    match kind {
        PolicyKind::HeuristicRealistic => {
            let remaining = params.remaining_slots(t) as f64;
            if bb.mean() + 1.0 > remaining || t.is_last(params.deadline) {
                Ok(throughput_argmax(bb))
            } else {
                Ok(1.0 / remaining)
            }
        }
        PolicyKind::Myopic => Ok(throughput_argmax(bb)),
        PolicyKind::Static(p) => Ok(*p),
        _ => Err(wrong_env(kind, "realistic")),
    }
}

/// Same rules as [`decide_realistic`] but driven by an arbitrary belief: the
/// branch uses the belief's mean and the throughput step maximizes
/// `sum_n b(n) p (1-p)^n` numerically.
pub fn decide_realistic_exact(
    kind: &PolicyKind,
    t: SlotIndex,
    b: &ActivityBelief,
    params: &ModelParams,
) -> Result<f64> {
    match kind {
        PolicyKind::HeuristicRealistic => {
            let remaining = params.remaining_slots(t) as f64;
            if b.mean() + 1.0 > remaining || t.is_last(params.deadline) {
                Ok(belief_throughput_argmax(b))
            } else {
                Ok(1.0 / remaining)
            }
        }
        PolicyKind::Myopic => Ok(belief_throughput_argmax(b)),
        PolicyKind::Static(p) => Ok(*p),
        _ => Err(wrong_env(kind, "realistic")),
    }
}

/// Maximizer of the expected one-slot throughput under Binomial(M, alpha):
/// `min(1/((M+1) alpha), 1)`, and `1` when `alpha = 0`.
pub fn throughput_argmax(bb: &BinomialBelief) -> f64 {
    let scale = (bb.trials as f64 + 1.0) * bb.prob;
    if scale <= 1.0 {
        1.0
    } else {
        1.0 / scale
    }
}

/// Numeric maximizer of `sum_n b(n) p (1-p)^n` for a general belief.
pub fn belief_throughput_argmax(b: &ActivityBelief) -> f64 {
    let probs = b.probs();
    let top = b.support_max();
    if top == 0 {
        return 1.0;
    }
    let objective = |p: f64| -> f64 {
        probs[..=top]
            .iter()
            .enumerate()
            .map(|(n, &w)| w * reward(n, p, 1.0))
            .sum()
    };
    let derivative = |p: f64| -> f64 {
        probs[..=top]
            .iter()
            .enumerate()
            .map(|(n, &w)| {
                if n == 0 {
                    w
                } else {
                    w * (1.0 - p).powi(n as i32 - 1) * (1.0 - (n + 1) as f64 * p)
                }
            })
            .sum()
    };
    maximize_unit(objective, Some(derivative), 256, DEFAULT_TOL).arg
}

/// Best constant probability and the TDR it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticOptimum {
    pub prob: f64,
    pub tdr: f64,
}

/// Analytic TDR of transmitting with the same probability in every slot.
pub fn static_tdr(params: &ModelParams, p: f64) -> Result<f64> {
    let table = evaluate_policy(params, &IdealizedPolicy::constant(params, p)?)?;
    analytic_tdr(params, &table)
}

/// Grid of `grid` points over `[0, 1]` followed by golden-section refinement
/// of the best bracket; ties go to the smallest probability.
pub fn optimize_static(params: &ModelParams, grid: usize) -> Result<StaticOptimum> {
    if grid < 3 {
        return Err(Error::InvalidParameter {
            name: "grid",
            value: grid.to_string(),
            range: "grid >= 3",
        });
    }
    params.validate()?;
    let eval = |p: f64| static_tdr(params, p).expect("validated params and probability");
    let step = 1.0 / (grid - 1) as f64;
    let values: Vec<f64> = (0..grid).map(|i| eval(i as f64 * step)).collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let idx = values
        .iter()
        .position(|&v| v >= best - 1e-12 * best.abs().max(1.0))
        .expect("non-empty grid");
    let lo = idx.saturating_sub(1) as f64 * step;
    let hi = (idx + 1).min(grid - 1) as f64 * step;
    let mut f = eval;
    let refined = golden_section(&mut f, lo, hi, 1e-9);
    Ok(if refined.value > values[idx] {
        StaticOptimum {
            prob: refined.arg,
            tdr: refined.value,
        }
    } else {
        StaticOptimum {
            prob: idx as f64 * step,
            tdr: values[idx],
        }
    })
}

/// Unresolved policy choice as written on the command line or in a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PolicySpec {
    Optimal,
    Even,
    Approx,
    Heuristic,
    Myopic,
    Static(f64),
    StaticAuto,
}

pub const STATIC_AUTO_GRID: usize = 201;

impl PolicySpec {
    /// Builds the concrete rule for `params`; solves the MDP for `optimal`
    /// and the static optimization for `static:auto`.
    pub fn resolve(&self, params: &ModelParams) -> Result<PolicyKind> {
        Ok(match self {
            PolicySpec::Optimal => {
                PolicyKind::OptimalIdealized(Arc::new(solve_optimal(params, DEFAULT_TOL)?))
            }
            PolicySpec::Even => PolicyKind::Even,
            PolicySpec::Approx => PolicyKind::ApproxIdealized,
            PolicySpec::Heuristic => PolicyKind::HeuristicRealistic,
            PolicySpec::Myopic => PolicyKind::Myopic,
            PolicySpec::Static(p) => PolicyKind::Static(*p),
            PolicySpec::StaticAuto => {
                PolicyKind::Static(optimize_static(params, STATIC_AUTO_GRID)?.prob)
            }
        })
    }

    pub fn is_idealized(&self) -> bool {
        matches!(self, PolicySpec::Optimal | PolicySpec::Even | PolicySpec::Approx)
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Optimal => f.write_str("optimal"),
            PolicySpec::Even => f.write_str("even"),
            PolicySpec::Approx => f.write_str("approx"),
            PolicySpec::Heuristic => f.write_str("heuristic"),
            PolicySpec::Myopic => f.write_str("myopic"),
            PolicySpec::Static(p) => write!(f, "static:{p}"),
            PolicySpec::StaticAuto => f.write_str("static:auto"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "optimal" => PolicySpec::Optimal,
            "even" => PolicySpec::Even,
            "approx" => PolicySpec::Approx,
            "heuristic" => PolicySpec::Heuristic,
            "myopic" => PolicySpec::Myopic,
            "static:auto" => PolicySpec::StaticAuto,
            other => match other.strip_prefix("static:") {
                Some(p) => {
                    let p: f64 = p.parse().map_err(|_| Error::UnknownPolicy(s.to_string()))?;
                    PolicySpec::Static(check_probability("static probability", p)?)
                }
                None => return Err(Error::UnknownPolicy(s.to_string())),
            },
        })
    }
}

impl From<PolicySpec> for String {
    fn from(spec: PolicySpec) -> Self {
        spec.to_string()
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
