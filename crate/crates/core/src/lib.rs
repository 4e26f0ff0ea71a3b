//! Prosocial reward shaping for learning agents in generalized Stag Hunts.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the pure parts of the
//! project:
//!
//! * [`matrix_games`]: Stag Hunt payoffs, bimatrix games, the prosocial
//!   transformation, best-response thresholds and pure Nash enumeration.
//! * [`dynamics`]: belief-based best-response dynamics and basin estimates.
//! * [`learners`]: softmax policies, Reinforce with Adam, reward mixing.
//! * [`envs_strategic`]: repeated dyads, network Stag Hunts, the weak-link game.
//! * [`repeated`]: one replicate of independent learners on a strategic game.
//! * [`envs_markov`]: the grid-world Markov games.
//! * [`neural`]: a small convolutional policy network with hand-written
//!   backward passes, RMSProp and batched Reinforce.
//! * [`markov_training`]: one replicate of two network agents on a grid game.
//!
//! File formats, parallel sweeps and the command line live in the companion
//! `prosocial` crate.
#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod dynamics;
pub mod envs_markov;
pub mod envs_strategic;
pub mod error;
pub mod learners;
pub mod markov_training;
pub mod matrix_games;
pub mod neural;
pub mod repeated;

pub use error::{Error, Result};

/// Deterministic RNG used for every replicate stream.
pub type Rng = rand_chacha::ChaCha8Rng;
