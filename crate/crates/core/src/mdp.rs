//! Finite-horizon MDP for the idealized environment, where every active node
//! knows how many other nodes are still active.
//!
//! Values are indexed by slot `t` in `1..=D` and other-active count `n` in
//! `0..N`. With all actives using `p`, the number of others that transmit is
//! Binomial(n, p) and the tagged node stays active with probability `1-p`, so
//! the Bellman objective at `(t, n)` is
//!
//! ```text
//! sigma p (1-p)^n + (1-p) * sum_k Binom(n, p)[k] * U[t+1][n-k]
//! ```

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{binomial_pmf, binomial_pmf_into};
use crate::error::{Error, Result};
use crate::model::{reward, ModelParams, SlotIndex};
use crate::optimize::{maximize_unit, DEFAULT_GRID};

/// Expected-total-reward table with the transmission probability attached to
/// each entry (the maximizer for an optimal table, the evaluated policy's
/// probability otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    params: ModelParams,
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ValueTable {
    fn index(&self, t: usize, n: usize) -> usize {
        assert!(t >= 1 && t <= self.params.deadline, "slot {t} out of range");
        assert!(n < self.params.nodes, "count {n} out of range");
        (t - 1) * self.params.nodes + n
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn value(&self, t: usize, n: usize) -> f64 {
        self.values[self.index(t, n)]
    }

    pub fn prob(&self, t: usize, n: usize) -> f64 {
        self.probs[self.index(t, n)]
    }

    pub fn values_at(&self, t: usize) -> &[f64] {
        let start = self.index(t, 0);
        &self.values[start..start + self.params.nodes]
    }

    pub fn probs_at(&self, t: usize) -> &[f64] {
        let start = self.index(t, 0);
        &self.probs[start..start + self.params.nodes]
    }

    /// The table's probabilities as a policy.
    pub fn policy(&self) -> IdealizedPolicy {
        IdealizedPolicy {
            deadline: self.params.deadline,
            width: self.params.nodes,
            probs: self.probs.clone(),
        }
    }

    /// CSV with header `t,n,value,p`, one row per `(t, n)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,n,value,p")?;
        for t in 1..=self.params.deadline {
            for n in 0..self.params.nodes {
                writeln!(out, "{},{},{},{}", t, n, self.value(t, n), self.prob(t, n))?;
            }
        }
        Ok(())
    }
}

/// Deterministic Markovian policy: a probability per `(t, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealizedPolicy {
    deadline: usize,
    width: usize,
    probs: Vec<f64>,
}

impl IdealizedPolicy {
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(params: &ModelParams, mut f: F) -> Result<Self> {
        let mut probs = Vec::with_capacity(params.deadline * params.nodes);
        for t in 1..=params.deadline {
            for n in 0..params.nodes {
                probs.push(crate::error::check_probability("policy probability", f(t, n))?);
            }
        }
        Ok(Self {
            deadline: params.deadline,
            width: params.nodes,
            probs,
        })
    }

    pub fn constant(params: &ModelParams, p: f64) -> Result<Self> {
        Self::from_fn(params, |_, _| p)
    }

    pub fn prob(&self, t: usize, n: usize) -> f64 {
        self.probs[(t - 1) * self.width + n]
    }
}

/// Bellman objective at one `(t, n)` cell, as a function of `p`.
pub struct SlotObjective<'a> {
    sigma: f64,
    n: usize,
    next: Option<&'a [f64]>,
    pmf: Vec<f64>,
}

impl<'a> SlotObjective<'a> {
    /// `next` is the value row of slot `t+1`, or `None` at the last slot.
    pub fn new(sigma: f64, n: usize, next: Option<&'a [f64]>) -> Self {
        Self {
            sigma,
            n,
            next,
            pmf: Vec::with_capacity(n + 1),
        }
    }

    pub fn value(&mut self, p: f64) -> f64 {
        let now = reward(self.n, p, self.sigma);
        let Some(next) = self.next else {
            return now;
        };
        binomial_pmf_into(self.n, p, &mut self.pmf);
        let n = self.n;
        let future: f64 = self
            .pmf
            .iter()
            .enumerate()
            .map(|(sent, &w)| w * next[n - sent])
            .sum();
        now + (1.0 - p) * future
    }

    pub fn derivative(&mut self, p: f64) -> f64 {
        let n = self.n;
        let sigma = self.sigma;
        let now = if n == 0 {
            sigma
        } else {
            sigma * (1.0 - p).powi(n as i32 - 1) * (1.0 - (n + 1) as f64 * p)
        };
        let Some(next) = self.next else {
            return now;
        };
        // g(p) = E[next[n - K]], K ~ Binom(n, p);
        // g'(p) = n * E[next[n - 1 - J] - next[n - J]], J ~ Binom(n - 1, p).
        binomial_pmf_into(n, p, &mut self.pmf);
        let g: f64 = self
            .pmf
            .iter()
            .enumerate()
            .map(|(sent, &w)| w * next[n - sent])
            .sum();
        let dg = if n == 0 {
            0.0
        } else {
            binomial_pmf_into(n - 1, p, &mut self.pmf);
            n as f64
                * self
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| w * (next[n - 1 - j] - next[n - j]))
                    .sum::<f64>()
        };
        now - g + (1.0 - p) * dg
    }
}

fn maximize_cell(sigma: f64, n: usize, next: Option<&[f64]>, tol: f64) -> (f64, f64) {
    let mut f = SlotObjective::new(sigma, n, next);
    let mut df = SlotObjective::new(sigma, n, next);
    let best = maximize_unit(
        |p| f.value(p),
        Some(|p| df.derivative(p)),
        DEFAULT_GRID,
        tol,
    );
    (best.value, best.arg)
}

/// Backward induction over `t = D, D-1, ..., 1`. Each cell's maximizer is
/// located on a 1,024-point grid, refined by golden section to `tol` and
/// polished on the derivative; ties go to the smallest probability.
pub fn solve_optimal(params: &ModelParams, tol: f64) -> Result<ValueTable> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol.to_string(),
            range: "tol > 0",
        });
    }
    let (width, deadline, sigma) = (params.nodes, params.deadline, params.sigma);
    let mut values = vec![0.0; deadline * width];
    let mut probs = vec![0.0; deadline * width];

    for t in (1..=deadline).rev() {
        let row: Vec<(f64, f64)> = if t == deadline {
            // sigma p (1-p)^n peaks at p = 1/(n+1)
            (0..width)
                .map(|n| {
                    let p = 1.0 / (n as f64 + 1.0);
                    (reward(n, p, sigma), p)
                })
                .collect()
        } else {
            let next = &values[t * width..(t + 1) * width];
            (0..width)
                .into_par_iter()
                .map(|n| maximize_cell(sigma, n, Some(next), tol))
                .collect()
        };
        let base = (t - 1) * width;
        for (n, (v, p)) in row.into_iter().enumerate() {
            values[base + n] = v;
            probs[base + n] = p;
        }
    }
    Ok(ValueTable {
        params: *params,
        values,
        probs,
    })
}

/// Finite-horizon policy evaluation: the Bellman recursion with the
/// maximization replaced by the policy's probability.
pub fn evaluate_policy(params: &ModelParams, policy: &IdealizedPolicy) -> Result<ValueTable> {
    params.validate()?;
    if policy.deadline != params.deadline || policy.width != params.nodes {
        return Err(Error::ShapeMismatch(format!(
            "policy is {}x{} but params need {}x{}",
            policy.deadline, policy.width, params.deadline, params.nodes
        )));
    }
    let (width, deadline, sigma) = (params.nodes, params.deadline, params.sigma);
    let mut values = vec![0.0; deadline * width];
    for t in (1..=deadline).rev() {
        let row: Vec<f64> = {
            let next = (t < deadline).then(|| &values[t * width..(t + 1) * width]);
            (0..width)
                .into_par_iter()
                .map(|n| SlotObjective::new(sigma, n, next).value(policy.prob(t, n)))
                .collect()
        };
        values[(t - 1) * width..t * width].copy_from_slice(&row);
    }
    Ok(ValueTable {
        params: *params,
        values,
        probs: policy.probs.clone(),
    })
}

/// TDR: the slot-1 values averaged over Binomial(N-1, lambda) other actives.
pub fn analytic_tdr(params: &ModelParams, table: &ValueTable) -> Result<f64> {
    if table.params.nodes != params.nodes || table.params.deadline != params.deadline {
        return Err(Error::ShapeMismatch(format!(
            "table built for N={} D={} but params have N={} D={}",
            table.params.nodes, table.params.deadline, params.nodes, params.deadline
        )));
    }
    let weights = binomial_pmf(params.nodes - 1, params.lambda);
    Ok(weights
        .iter()
        .zip(table.values_at(1))
        .map(|(w, u)| w * u)
        .sum())
}

/// Large-contention limit of `(n+1) U*_t(n)`: `(D-t+1) sigma / e`.
pub fn large_contention_limit(params: &ModelParams, t: SlotIndex) -> f64 {
    params.remaining_slots(t) as f64 * params.sigma / std::f64::consts::E
}

/// Closed-form optimum with exactly one other active node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePeer {
    pub value: f64,
    /// `None` at the last slot.
    pub prob: Option<f64>,
}

pub fn single_peer_oracle(params: &ModelParams, t: SlotIndex) -> SinglePeer {
    let k = 3.0 * params.remaining_slots(t) as f64;
    SinglePeer {
        value: params.sigma * (k - 2.0) / (k + 1.0),
        prob: (!t.is_last(params.deadline)).then(|| 3.0 / (k + 1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, d: usize, lambda: f64, sigma: f64) -> ModelParams {
        ModelParams::new(n, d, lambda, sigma).unwrap()
    }

    #[test]
    fn last_slot_row_is_closed_form() {
        let p = params(12, 4, 0.5, 0.8);
        let table = solve_optimal(&p, 1e-10).unwrap();
        for n in 0..12 {
            let q = 1.0 / (n as f64 + 1.0);
            assert_eq!(table.prob(4, n), q);
            let expected = 0.8 * q * (n as f64 / (n as f64 + 1.0)).powi(n as i32);
            assert!((table.value(4, n) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn single_peer_matches_closed_form() {
        let p = params(4, 7, 0.5, 0.6);
        let table = solve_optimal(&p, 1e-10).unwrap();
        assert!((table.prob(6, 1) - 3.0 / 7.0).abs() < 1e-10);
        for t in 1..=7 {
            let oracle = single_peer_oracle(&p, SlotIndex::new(t, 7).unwrap());
            assert!((table.value(t, 1) - oracle.value).abs() < 1e-10);
            if let Some(q) = oracle.prob {
                assert!((table.prob(t, 1) - q).abs() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn single_peer_oracle_examples() {
        let p = params(3, 2, 0.5, 1.0);
        let first = single_peer_oracle(&p, SlotIndex::new(1, 2).unwrap());
        assert!((first.value - 4.0 / 7.0).abs() < 1e-15);
        assert!((first.prob.unwrap() - 3.0 / 7.0).abs() < 1e-15);
        let last = single_peer_oracle(&p, SlotIndex::new(2, 2).unwrap());
        assert!((last.value - 0.25).abs() < 1e-15);
        assert_eq!(last.prob, None);
    }

    #[test]
    fn large_contention_limit_examples() {
        let p = params(5, 10, 0.5, 0.9);
        let first = large_contention_limit(&p, SlotIndex::new(1, 10).unwrap());
        assert!((first - 3.310_915).abs() < 1e-6);
        let last = large_contention_limit(&p, SlotIndex::new(10, 10).unwrap());
        assert!((last - 0.9 / std::f64::consts::E).abs() < 1e-15);
        let single = params(2, 1, 0.5, 1.0);
        assert!((large_contention_limit(&single, SlotIndex::new(1, 1).unwrap()) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn two_nodes_one_slot_tdr() {
        let p = params(2, 1, 1.0, 1.0);
        let table = solve_optimal(&p, 1e-10).unwrap();
        assert!((analytic_tdr(&p, &table).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sparse_traffic_tdr_approaches_sigma() {
        let p = params(20, 5, 1e-6, 0.7);
        let table = solve_optimal(&p, 1e-10).unwrap();
        assert!((table.value(1, 0) - 0.7).abs() < 1e-15);
        assert!((analytic_tdr(&p, &table).unwrap() - 0.7).abs() < 1e-4);
    }

    #[test]
    fn silent_policy_earns_nothing() {
        let p = params(6, 5, 0.5, 0.9);
        let silent = IdealizedPolicy::constant(&p, 0.0).unwrap();
        let table = evaluate_policy(&p, &silent).unwrap();
        assert!(table.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluating_the_optimal_policy_reproduces_its_values() {
        let p = params(15, 8, 0.5, 0.9);
        let optimal = solve_optimal(&p, 1e-10).unwrap();
        let replay = evaluate_policy(&p, &optimal.policy()).unwrap();
        for (a, b) in optimal.values.iter().zip(&replay.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let p = params(6, 5, 0.5, 0.9);
        let other = params(7, 5, 0.5, 0.9);
        let table = solve_optimal(&p, 1e-10).unwrap();
        assert!(analytic_tdr(&other, &table).is_err());
        let policy = IdealizedPolicy::constant(&other, 0.2).unwrap();
        assert!(evaluate_policy(&p, &policy).is_err());
        assert!(IdealizedPolicy::constant(&p, 1.5).is_err());
        assert!(solve_optimal(&p, 0.0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let p = params(3, 2, 0.5, 1.0);
        let table = solve_optimal(&p, 1e-10).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,n,value,p");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("1,0,"));
    }
}
