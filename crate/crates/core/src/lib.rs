//! Core of a seed-deterministic artificial stock market.
//!
//! Everything in this crate is pure computation over caller-owned state and
//! seeded random streams, so it builds without `std`. File formats, the
//! command line and worker pools live in the `ecomarket` crate.
//!
//! The pieces, bottom-up:
//!
//! - [`lob`]: price-time priority limit order book with halt windows.
//! - [`traits`]: heterogeneous preference traits and their priors.
//! - [`rl`]: the 11-component observation, action-to-order mapping, reward.
//! - [`policy`]: shared actor-critic networks and the PPO update.
//! - [`baselines`]: zero-intelligence, FCN and adaptive FCN agents.
//! - [`env`]: the market driver tying the above together.
//! - [`train`]: the shared-policy training loop over per-agent buffers.
//! - [`stylized`]: stylized-fact statistics on one-minute bars.
//! - [`ot`]: point clouds, exact optimal transport and grid calibration.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod env;
pub mod lob;
pub mod ot;
pub mod policy;
pub mod rl;
pub mod stylized;
pub mod traits;
pub mod train;

mod seed;

pub use seed::derive_seed;

/// Generator used for every seeded stream in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
