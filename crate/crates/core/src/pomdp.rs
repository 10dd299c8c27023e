//! Exact backward induction for the realistic environment over a finite
//! action grid, by enumerating the beliefs reachable from the initial one.
//! Only tiny instances are tractable: the tree has up to `(2|A|)^(D-1)`
//! nodes before memoization.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::belief::{bayes_update, initial_belief, ActivityBelief};
use crate::error::{Error, Result};
use crate::model::{chi, reward, ModelParams, Observation};

/// `{0, dp, 2dp, ..., 1}` with `1/dp` an integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedActions {
    steps: usize,
}

impl DiscretizedActions {
    pub fn new(delta_p: f64) -> Result<Self> {
        let steps = (1.0 / delta_p).round();
        if !(delta_p > 0.0 && delta_p <= 1.0) || ((1.0 / delta_p) - steps).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "delta_p",
                value: delta_p.to_string(),
                range: "0 < delta_p <= 1 with 1/delta_p an integer",
            });
        }
        Ok(Self {
            steps: steps as usize,
        })
    }

    pub fn delta_p(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| i as f64 / self.steps as f64)
    }

    /// Nearest grid action to `p`.
    pub fn snap(&self, p: f64) -> f64 {
        (p * self.steps as f64).round() / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PomdpLimits {
    pub max_nodes: usize,
    pub max_deadline: usize,
    pub max_tree_nodes: u64,
}

impl Default for PomdpLimits {
    fn default() -> Self {
        Self {
            max_nodes: 8,
            max_deadline: 6,
            max_tree_nodes: 5_000_000,
        }
    }
}

/// A solved belief: the value from slot `t` on and the best grid action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefNode {
    pub t: usize,
    pub belief: Vec<f64>,
    pub value: f64,
    pub best_action: f64,
}

#[derive(Debug, Clone)]
pub struct PomdpSolution {
    pub root: BeliefNode,
    /// Every distinct `(t, belief)` visited, in first-expansion order.
    pub nodes: Vec<BeliefNode>,
    pub actions: DiscretizedActions,
}

impl PomdpSolution {
    /// JSON lines, one node per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for node in &self.nodes {
            serde_json::to_writer(&mut out, node)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Worst-case number of belief nodes before memoization.
pub fn estimated_tree_size(deadline: usize, actions: usize) -> u64 {
    let branching = 2 * actions as u64;
    let mut level = 1u64;
    let mut total = 0u64;
    for _ in 0..deadline {
        total = total.saturating_add(level);
        level = level.saturating_mul(branching);
    }
    total
}

const KEY_RESOLUTION: f64 = 1e12;

fn belief_key(t: usize, b: &ActivityBelief) -> (usize, Vec<i64>) {
    (
        t,
        b.probs().iter().map(|v| (v * KEY_RESOLUTION).round() as i64).collect(),
    )
}

struct Solver<'a> {
    params: &'a ModelParams,
    actions: Vec<f64>,
    memo: HashMap<(usize, Vec<i64>), usize>,
    nodes: Vec<BeliefNode>,
    max_tree_nodes: u64,
}

impl Solver<'_> {
    fn solve(&mut self, t: usize, b: &ActivityBelief) -> Result<usize> {
        let key = belief_key(t, b);
        if let Some(&idx) = self.memo.get(&key) {
            return Ok(idx);
        }
        if self.nodes.len() as u64 >= self.max_tree_nodes {
            return Err(Error::LimitExceeded {
                limit: "max_nodes",
                value: self.nodes.len() as u64 + 1,
                max: self.max_tree_nodes,
            });
        }
        let idx = self.nodes.len();
        self.nodes.push(BeliefNode {
            t,
            belief: b.probs().to_vec(),
            value: f64::NAN,
            best_action: f64::NAN,
        });
        self.memo.insert(key, idx);

        let sigma = self.params.sigma;
        let last = t == self.params.deadline;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for a in 0..self.actions.len() {
            let p = self.actions[a];
            let mut value: f64 = b
                .probs()
                .iter()
                .enumerate()
                .map(|(n, &w)| w * reward(n, p, sigma))
                .sum();
            if !last {
                for o in Observation::ALL {
                    let weight = chi(o, b, p);
                    if weight <= 0.0 {
                        continue;
                    }
                    let child = bayes_update(b, p, o)?;
                    let child_idx = self.solve(t + 1, &child)?;
                    value += weight * self.nodes[child_idx].value;
                }
            }
            if best.1.is_nan() || value > best.0 + 1e-12 * best.0.abs().max(1.0) {
                best = (value, p);
            }
        }
        self.nodes[idx].value = best.0;
        self.nodes[idx].best_action = best.1;
        Ok(idx)
    }
}

/// Solves the belief-space Bellman recursion from the initial belief.
/// Refuses instances beyond `limits` before doing any work, and aborts if
/// the memoized tree outgrows `limits.max_tree_nodes`.
pub fn solve_pomdp(
    params: &ModelParams,
    actions: &DiscretizedActions,
    limits: &PomdpLimits,
) -> Result<PomdpSolution> {
    params.validate()?;
    if params.nodes > limits.max_nodes {
        return Err(Error::LimitExceeded {
            limit: "max_N",
            value: params.nodes as u64,
            max: limits.max_nodes as u64,
        });
    }
    if params.deadline > limits.max_deadline {
        return Err(Error::LimitExceeded {
            limit: "max_D",
            value: params.deadline as u64,
            max: limits.max_deadline as u64,
        });
    }
    let estimate = estimated_tree_size(params.deadline, actions.len());
    if estimate > limits.max_tree_nodes {
        return Err(Error::LimitExceeded {
            limit: "max_nodes",
            value: estimate,
            max: limits.max_tree_nodes,
        });
    }
    let mut solver = Solver {
        params,
        actions: actions.iter().collect(),
        memo: HashMap::new(),
        nodes: Vec::new(),
        max_tree_nodes: limits.max_tree_nodes,
    };
    let root_idx = solver.solve(1, &initial_belief(params))?;
    Ok(PomdpSolution {
        root: solver.nodes[root_idx].clone(),
        nodes: solver.nodes,
        actions: actions.clone(),
    })
}

/// TDR of the solved policy: the root value.
pub fn pomdp_policy_tdr(solution: &PomdpSolution) -> f64 {
    solution.root.value
}
