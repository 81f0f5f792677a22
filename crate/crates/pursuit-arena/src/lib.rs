//! 2D pursuit-evasion arena for heterogeneous UAV/UGV teams.
//!
//! A police team (mixed aerial and ground robots with different speed,
//! acceleration and perception profiles) tries to capture a criminal team
//! before it reaches a spot of interest. The crate bundles the world model
//! and kinematics, masked local observations, the capability-aware reward
//! decomposition, a hand-rolled MLP with exact reverse-mode gradients, a
//! centralized-critic / decentralized-actor trainer, and the episode engine
//! plus CLI glue used by the `pursuit` binary.

pub mod approximator;
pub mod arena;
pub mod cli;
pub mod engine;
mod error;
pub mod geom;
pub mod learner;
pub mod motion;
pub mod objective;
pub mod perception;
pub mod state;

pub use arena::{
    load_scenario, load_scenario_file, serialize_scenario, Region, RegionKind, Scenario, WorldMap,
};
pub use error::{Error, Result};
pub use geom::Vec2;
pub use motion::{RobotKind, RobotSpec, Team};
