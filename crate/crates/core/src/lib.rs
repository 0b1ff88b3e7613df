//! Laboratory for temporal action abstractions at desk scale.
//!
//! * [`mdp`] and [`smdp`]: finite MDPs, options as distributions over
//!   open-loop action sequences, and semi-MDP value iteration.
//! * [`pruning`]: pruning an action universe from sampled expert tasks and
//!   splitting regret into pruning and RL error.
//! * [`seq`]: a sequence model with think latents, its ELBO, exact marginals
//!   and the KL decomposition under the temporal prior.
//! * [`ra3`]: EM mid-training with a policy-gradient E-step.
//! * [`world`]: a synthetic skill world with ground-truth boundaries.
//! * [`rlvr`]: GRPO post-training against verifiable skill-composition tasks.
//! * [`verify`], [`fixtures`], [`cli`]: numbered checks, reference scenarios
//!   and the `ra3lab` command line.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
// Index loops mirror the matrix notation of the numerics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod hash;
pub mod mdp;
pub mod numeric;
pub mod pruning;
pub mod ra3;
pub mod rlvr;
pub mod rng;
pub mod seq;
pub mod smdp;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
