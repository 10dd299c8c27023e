//! Dynamic transmission-probability control for frame-synchronized,
//! deadline-constrained random-access broadcasting.
//!
//! - [`model`]: parameters and the per-slot kernel of a tagged active node.
//! - [`mdp`]: backward induction and policy evaluation with known contention.
//! - [`belief`]: exact and binomial activity-belief tracking.
//! - [`policies`]: the optimal, even, approximate, heuristic and static schemes.
//! - [`pomdp`]: exact belief-tree induction for tiny instances.
//! - [`sim`]: Monte Carlo TDR estimation, sweeps and realization traces.

pub mod belief;
pub mod binomial;
pub mod error;
pub mod mdp;
pub mod model;
pub mod optimize;
pub mod policies;
pub mod pomdp;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ModelParams, Observation, SlotIndex};
