//! Decentralized TD3 with partner action estimation, a centralized TD3
//! baseline, a kinematic two-arm lifting task and a command interpolation
//! pipeline for deployment.
//!
//! Modules, bottom up:
//!
//! * [`nn`]: dense networks with analytic gradients and Adam.
//! * [`rl`]: replay buffer, action bounds, exploration noise, soft updates.
//! * [`agent`]: the TD3 learner, with or without an action estimation network.
//! * [`env`]: the lifting environment.
//! * [`deploy`]: policy-rate to control-rate interpolation with a safety filter.
//! * [`harness`]: training, evaluation, fine-tuning and metrics.

pub mod agent;
pub mod deploy;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rl;

pub use error::{Error, Result};
