//! Grid traffic-signal simulation and multi-agent DDPG with spatial
//! influence and neighbor-weighted rewards.

pub mod ddpg;
pub mod env;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod influence;
pub mod nn;
pub mod reward;
pub mod traffic;

pub use error::{Error, Result};
