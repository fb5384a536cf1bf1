//! Offline reinforcement learning with a dual-generator adversarial support
//! constraint.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small f32 tensor engine with a reverse-mode tape, MLPs, Adam and
//!   a binary checkpoint format.
//! - [`theory`]: exact discrete-space optima for the single- and dual-generator
//!   objectives, with brute-force oracles and KKT checks.
//! - [`ganlab`]: a continuous 1D/2D demonstration of the dual-generator game.
//! - [`envs`]: toy point mazes, a scripted waypoint behavior policy, position
//!   dependent action corruption and the offline dataset file format.
//! - [`agent`]: the actor-critic learner with twin critics, discriminator and
//!   auxiliary generator, plus a behavior-cloning baseline.

pub mod agent;
pub mod envs;
pub mod error;
pub mod ganlab;
pub mod nn;
pub mod svg;
pub mod theory;

pub use error::{Error, Result};
