//! Hierarchical reinforcement learning with timed subgoals, variable-discount
//! soft actor-critic and emergency action termination.
//!
//! Everything here is `no_std` with `alloc`. File formats, the command line
//! and threading live in the companion `eat-hrl` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod approx;
pub mod config;
pub mod eat;
pub mod envs;
pub mod hits;
pub mod hmdp;
pub mod runner;
pub mod sac;
pub mod seeds;
