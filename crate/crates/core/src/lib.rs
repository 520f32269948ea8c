//! Energy-constrained broadcast scheduling lab.
//!
//! Nodes with tiny power budgets cycle between sleep, listen and transmit.
//! This crate computes the best throughput a centralized scheduler could
//! reach (linear programs), the throughput of the entropy-perturbed problem
//! (exact Gibbs distributions plus dual descent), and simulates the
//! distributed protocol whose stationary law is that Gibbs distribution.

pub mod analytics;
pub mod cli;
pub mod config;
pub mod error;
pub mod gibbs;
pub mod network;
pub mod oracle;
pub mod protocol;
pub mod simulator;
pub mod state_space;

pub use error::{Error, Result};
pub use network::{NetworkConfig, NodePowerProfile, Topology};
pub use state_space::{NetworkState, NodeState, StateSpace, ThroughputMode};
