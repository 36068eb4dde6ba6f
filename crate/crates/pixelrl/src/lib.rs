//! Per-pixel reinforcement learning for image restoration.
//!
//! Every pixel is an agent choosing a classical image operation each step; all
//! agents share one fully convolutional actor-critic trained by synchronous
//! advantage actor-critic, optionally with a learned reward-propagation kernel
//! that lets an agent's return include discounted rewards of its neighbors.
//!
//! The crate exposes:
//! - [`actions`]: the per-pixel action sets and their application,
//! - [`env`]: episode dynamics, corruptions, and reward maps,
//! - [`net`]: the dilated FCN policy/value network with hand-rolled backprop,
//! - [`rmc`]: reward map convolution returns and the kernel gradient,
//! - [`trainer`]: the training loop, optimizer, and checkpoints,
//! - [`oracle`]: slow reference implementations used for verification.

pub mod actions;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod eval;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod rmc;
pub mod trainer;
pub mod viz;

pub use error::{PixelRlError, Result};
pub use grid::{PixelGrid, PixelSpace};
