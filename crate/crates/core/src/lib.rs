//! Simulation, reward, metrics and training toolkit for language-guided
//! UAV navigation over procedurally generated landmark worlds.
//!
//! The crate is organized around the decision loop: [`world`] holds the
//! kinematics and sensor model, [`synth`] builds episodes with expert
//! trajectories, [`memory`] selects history frames, [`harness`] runs agents,
//! [`reward`] and [`metrics`] score them, and [`train`] fits a compact policy
//! with behavior cloning followed by GRPO.

pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod synth;
pub mod train;
pub mod world;

pub use error::{Error, Result};
