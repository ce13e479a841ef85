//! Discrete-event simulator for bandwidth- and latency-limited multi-agent
//! communication, with VoI-driven resource allocation and a MAPPO training
//! harness.

pub mod agent;
pub mod allocator;
pub mod channel;
pub mod config;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod seeds;
pub mod simulator;
pub mod stats;
pub mod theory;
pub mod trainer;
pub mod verify;
pub mod voi;

pub use error::{Error, Result};
