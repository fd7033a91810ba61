//! Reimplementations of MAP-Elites and PPO benchmarked against each other on
//! a deterministic hexapod locomotion surrogate, with the hyper-parameter
//! search, replication statistics and run harness needed to compare them.

pub mod env;
pub mod nn;
pub mod seed;
pub mod qd;
pub mod rl;
pub mod stats;
pub mod harness;
pub mod tuning;
