//! Simulation of decentralized optimization over a network of agents.
//!
//! Each node holds a private smooth objective `f_i`; the network minimizes
//! `F = (1/n) Σ f_i` by alternating local computation with averaging through
//! a doubly stochastic mixing matrix.

pub mod algorithms;
pub mod analysis;
pub mod block;
pub mod config;
pub mod datasets;
pub mod problems;
pub mod runner;
pub mod topology;
