//! Activity beliefs: the posterior over how many OTHER nodes are still
//! active, tracked either exactly by Bayes' rule or approximately by a
//! two-parameter binomial family updated with mean matching.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::binomial::binomial_pmf;
use crate::error::{Error, Result};
use crate::model::{chi, ModelParams, Observation, SlotIndex};

const SUM_TOL: f64 = 1e-9;

/// Probability vector over `0..N` other active nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityBelief(Vec<f64>);

impl ActivityBelief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::ShapeMismatch("belief must have at least one entry".into()));
        }
        if let Some(bad) = probs.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "belief entry",
                value: bad.to_string(),
                range: "nonnegative and finite",
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "belief sum",
                value: total.to_string(),
                range: "1 within 1e-9",
            });
        }
        Ok(Self(probs))
    }

    pub fn point_mass(width: usize, at: usize) -> Self {
        assert!(at < width, "point mass at {at} outside belief of width {width}");
        let mut probs = vec![0.0; width];
        probs[at] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().enumerate().map(|(n, &w)| n as f64 * w).sum()
    }

    /// Largest count carrying positive probability.
    pub fn support_max(&self) -> usize {
        self.0.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Binomial(M, alpha) approximation of the activity belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialBelief {
    pub trials: usize,
    pub prob: f64,
}

impl BinomialBelief {
    pub fn new(trials: usize, prob: f64) -> Result<Self> {
        crate::error::check_probability("alpha", prob)?;
        Ok(Self { trials, prob })
    }

    /// The exact starting belief `(N-1, lambda)`.
    pub fn initial(params: &ModelParams) -> Self {
        Self {
            trials: params.nodes - 1,
            prob: params.lambda,
        }
    }

    pub fn mean(&self) -> f64 {
        self.trials as f64 * self.prob
    }
}

/// Binomial(N-1, lambda): every other node generated a packet independently.
pub fn initial_belief(params: &ModelParams) -> ActivityBelief {
    ActivityBelief(binomial_pmf(params.nodes - 1, params.lambda))
}

/// Exact Bayes update of `b` after a slot where every active node used `p`
/// and the channel was heard as `o`, conditioned on the tagged node staying
/// active.
pub fn bayes_update(b: &ActivityBelief, p: f64, o: Observation) -> Result<ActivityBelief> {
    let norm = chi(o, b, p);
    if !(norm > 0.0) {
        return Err(Error::ImpossibleObservation {
            observation: o,
            probability: norm,
        });
    }
    let width = b.width();
    let silent = 1.0 - p;
    let mut next = vec![0.0; width];
    match o {
        Observation::Idle => {
            for (n, &w) in b.probs().iter().enumerate() {
                next[n] = w * silent.powi(n as i32 + 1);
            }
        }
        Observation::Busy => {
            // n others -> n' survivors: Binomial(n, 1-p) restricted to n' < n.
            for (n, &w) in b.probs().iter().enumerate().skip(1) {
                if w == 0.0 {
                    continue;
                }
                let survivors = binomial_pmf(n, silent);
                for (n_next, &s) in survivors.iter().take(n).enumerate() {
                    next[n_next] += w * silent * s;
                }
            }
        }
    }
    for v in &mut next {
        *v /= norm;
    }
    Ok(ActivityBelief(next))
}

/// Binomial(M, alpha) pmf padded with zeros to `width` entries.
pub fn binom_expand(bb: &BinomialBelief, width: usize) -> Result<ActivityBelief> {
    if bb.trials >= width {
        return Err(Error::ShapeMismatch(format!(
            "binomial belief with M={} does not fit in width {width}",
            bb.trials
        )));
    }
    let mut probs = binomial_pmf(bb.trials, bb.prob);
    probs.resize(width, 0.0);
    Ok(ActivityBelief(probs))
}

/// Approximate update: exact for an idle slot, mean-preserving refit onto
/// `M-1` trials after a busy slot.
pub fn binom_update(bb: &BinomialBelief, p: f64, o: Observation) -> Result<BinomialBelief> {
    let BinomialBelief { trials: m, prob: alpha } = *bb;
    let keep = alpha - alpha * p;
    let none_sent = 1.0 - alpha * p;
    match o {
        Observation::Idle => {
            if m == 0 {
                return Ok(*bb);
            }
            if !(none_sent > 0.0) {
                return Err(Error::ImpossibleObservation {
                    observation: o,
                    probability: none_sent,
                });
            }
            Ok(BinomialBelief {
                trials: m,
                prob: (keep / none_sent).clamp(0.0, 1.0),
            })
        }
        Observation::Busy => {
            let busy = 1.0 - none_sent.powi(m as i32);
            if m == 0 || !(busy > 0.0) {
                return Err(Error::ImpossibleObservation {
                    observation: o,
                    probability: if m == 0 { 0.0 } else { busy },
                });
            }
            if m == 1 {
                return Ok(BinomialBelief { trials: 0, prob: 1.0 });
            }
            let busy_fewer = 1.0 - none_sent.powi(m as i32 - 1);
            let prob = m as f64 * keep * busy_fewer / ((m - 1) as f64 * busy);
            Ok(BinomialBelief {
                trials: m - 1,
                prob: prob.clamp(0.0, 1.0),
            })
        }
    }
}

/// Total-variation distance.
pub fn belief_divergence(a: &ActivityBelief, b: &ActivityBelief) -> Result<f64> {
    if a.width() != b.width() {
        return Err(Error::ShapeMismatch(format!(
            "beliefs of width {} and {}",
            a.width(),
            b.width()
        )));
    }
    Ok(0.5
        * a.probs()
            .iter()
            .zip(b.probs())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefKind {
    Exact,
    Approx,
}

impl BeliefKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BeliefKind::Exact => "exact",
            BeliefKind::Approx => "approx",
        }
    }
}

/// One slot of a belief trace: the beliefs held at the start of slot `t`,
/// the probability used in it and the observation heard at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefTraceRow {
    pub t: usize,
    pub observation: Observation,
    pub prob: f64,
    pub exact: ActivityBelief,
    pub approx: BinomialBelief,
    pub approx_expanded: ActivityBelief,
}

/// Runs the exact and binomial beliefs side by side along a fixed
/// observation sequence. `decide` picks each slot's transmission probability
/// from the binomial belief; both trackers are updated with it.
pub fn trace_beliefs<F>(
    params: &ModelParams,
    observations: &[Observation],
    mut decide: F,
) -> Result<Vec<BeliefTraceRow>>
where
    F: FnMut(SlotIndex, &BinomialBelief) -> Result<f64>,
{
    if observations.len() > params.deadline {
        return Err(Error::ShapeMismatch(format!(
            "{} observations for a frame of {} slots",
            observations.len(),
            params.deadline
        )));
    }
    let width = params.belief_width();
    let mut exact = initial_belief(params);
    let mut approx = BinomialBelief::initial(params);
    let mut rows = Vec::with_capacity(observations.len());
    for (i, &o) in observations.iter().enumerate() {
        let t = SlotIndex::new(i + 1, params.deadline)?;
        let p = decide(t, &approx)?;
        rows.push(BeliefTraceRow {
            t: t.get(),
            observation: o,
            prob: p,
            exact: exact.clone(),
            approx,
            approx_expanded: binom_expand(&approx, width)?,
        });
        if i + 1 < observations.len() {
            exact = bayes_update(&exact, p, o)?;
            approx = binom_update(&approx, p, o)?;
        }
    }
    Ok(rows)
}

/// Writes `t,o,kind,b0,...,b{N-1}`, an exact and an approx line per slot.
pub fn write_trace_csv<W: Write>(mut out: W, width: usize, rows: &[BeliefTraceRow]) -> Result<()> {
    write!(out, "t,o,kind")?;
    for n in 0..width {
        write!(out, ",b{n}")?;
    }
    writeln!(out)?;
    for row in rows {
        for (kind, belief) in [
            (BeliefKind::Exact, &row.exact),
            (BeliefKind::Approx, &row.approx_expanded),
        ] {
            write!(out, "{},{},{}", row.t, row.observation.bit(), kind.as_str())?;
            for v in belief.probs() {
                write!(out, ",{v:.6}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
