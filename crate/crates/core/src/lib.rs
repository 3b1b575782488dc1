//! Sparse training for deep reinforcement learning agents.

pub mod agents;
pub mod envs;
pub mod harness;
pub mod numerics;
pub mod sparse;
pub mod topology;
