//! Reinforcement learning in exogenous block MDPs.
//!
//! Latent state factors into an endogenous component, driven by actions, and
//! an exogenous component that evolves on its own. Observations decode the
//! full latent state but rewards and control depend only on the endogenous
//! part, so the learner can recover a small endogenous model by eliminating
//! open-loop paths whose visitation distributions coincide.
//!
//! Modules:
//! - [`core`]: actions, paths, trajectories, seeding, run configuration.
//! - [`env`]: environment specifications, samplers, and benchmark builders.
//! - [`oracle`]: exact dynamic-programming quantities for small instances.
//! - [`classifier`]: path classifiers (tabular MLE, softmax, cheating).
//! - [`ppe`]: path elimination, model recovery, and the learned decoder.
//! - [`planning`]: value iteration, policy search over decoded states.
//! - [`baselines`]: exact-identifiability abstraction baseline.
//! - [`metrics`]: decoder accuracy, model isomorphism, run summaries.
//! - [`cli`]: experiment configuration and command entry points.

pub mod baselines;
pub mod classifier;
pub mod cli;
pub mod core;
pub mod env;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod planning;
pub mod ppe;

pub use error::{ExoRlError, Result};
