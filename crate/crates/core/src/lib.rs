//! Asynchronous curriculum experience replay (ACER) on top of a from-scratch
//! TD3 learner.
//!
//! The crate is split along the replay pipeline:
//!
//! - [`nn`]: dense MLPs with reverse-mode gradients, Adam and soft target updates.
//! - [`replay`]: the double sum-tree, temporary pool and replay buffer in its
//!   uniform, clipped-PER and ACER modes.
//! - [`curriculum`]: the curriculum priority function and its schedule.
//! - [`refresh`]: the asynchronous priority refresher and the probability-gap
//!   diagnostics.
//! - [`td3`]: the twin-delayed actor-critic learner.
//! - [`env`]: the 3D UAV battlefield and a small 2D point-mass task.

pub mod curriculum;
pub mod env;
pub mod error;
pub mod nn;
pub mod refresh;
pub mod replay;
pub mod rng;
pub mod td3;

pub use error::{AcerError, Result};
