//! Network parameters and the per-slot stochastic kernel seen by a tagged
//! active node: state transitions, rewards, channel observations and the
//! observation normalizer used by belief updates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::ActivityBelief;
use crate::error::{Error, Result};

/// A network instance: `nodes` broadcasters sharing one channel, frames of
/// `deadline` slots, per-frame packet generation probability `lambda` and
/// per-receiver success probability `sigma` for a collision-free packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nodes: usize,
    pub deadline: usize,
    pub lambda: f64,
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(nodes: usize, deadline: usize, lambda: f64, sigma: f64) -> Result<Self> {
        let params = Self {
            nodes,
            deadline,
            lambda,
            sigma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::InvalidParameter {
                name: "N",
                value: self.nodes.to_string(),
                range: "N >= 2",
            });
        }
        if self.deadline < 1 {
            return Err(Error::InvalidParameter {
                name: "D",
                value: self.deadline.to_string(),
                range: "D >= 1",
            });
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda.to_string(),
                range: "lambda ∈ (0,1]",
            });
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: self.sigma.to_string(),
                range: "sigma ∈ (0,1]",
            });
        }
        Ok(())
    }

    /// Number of possible values of the other-active count, `0..N`.
    pub fn belief_width(&self) -> usize {
        self.nodes
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.nodes, self.deadline, lambda, self.sigma)
    }

    pub fn with_deadline(self, deadline: usize) -> Result<Self> {
        Self::new(self.nodes, deadline, self.lambda, self.sigma)
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.nodes, self.deadline, self.lambda, sigma)
    }

    /// Slots left in the frame at the start of slot `t`, counting `t` itself.
    pub fn remaining_slots(&self, t: SlotIndex) -> usize {
        self.deadline - t.get() + 1
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} D={} lambda={} sigma={}",
            self.nodes, self.deadline, self.lambda, self.sigma
        )
    }
}

/// A slot number within a frame, `1..=D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotIndex(usize);

impl SlotIndex {
    pub fn new(t: usize, deadline: usize) -> Result<Self> {
        if t >= 1 && t <= deadline {
            Ok(Self(t))
        } else {
            Err(Error::InvalidParameter {
                name: "t",
                value: t.to_string(),
                range: "1 <= t <= D",
            })
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_last(self, deadline: usize) -> bool {
        self.0 == deadline
    }
}

/// Channel status of a finished slot as heard by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    Idle = 0,
    Busy = 1,
}

impl Observation {
    pub const ALL: [Observation; 2] = [Observation::Idle, Observation::Busy];

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Self::Idle),
            1 => Some(Self::Busy),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn from_transmissions(count: u64) -> Self {
        if count == 0 {
            Self::Idle
        } else {
            Self::Busy
        }
    }
}

/// Probability that the tagged node (active, with `n` other actives) moves to
/// activity `stays_active` with `n_next` other actives when every active node
/// transmits with probability `p`.
pub fn transition_prob(n: usize, stays_active: bool, n_next: usize, p: f64) -> f64 {
    if n_next > n {
        return 0.0;
    }
    let q = usize::from(stays_active);
    let transmitted = n - n_next;
    crate::binomial::binomial_coefficient(n, transmitted)
        * p.powi((transmitted + 1 - q) as i32)
        * (1.0 - p).powi((n_next + q) as i32)
}

/// Expected successful deliveries of the tagged packet in one slot.
pub fn reward(n: usize, p: f64, sigma: f64) -> f64 {
    sigma * p * (1.0 - p).powi(n as i32)
}

/// Probability of hearing `o` given the other-active count before (`n`) and
/// after (`n_next`) the slot, with the tagged node still active.
pub fn observation_prob(o: Observation, n: usize, n_next: usize) -> f64 {
    let hit = match o {
        Observation::Idle => n == n_next,
        Observation::Busy => n > n_next,
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Joint probability that the tagged node stays active and hears `o`, given
/// belief `b` over the other-active count and common transmission
/// probability `p`.
pub fn chi(o: Observation, b: &ActivityBelief, p: f64) -> f64 {
    let silent = 1.0 - p;
    b.probs()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(n, &w)| {
            let all_silent = silent.powi(n as i32);
            match o {
                Observation::Idle => w * silent * all_silent,
                Observation::Busy => w * silent * (1.0 - all_silent),
            }
        })
        .sum()
}
