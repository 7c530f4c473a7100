//! Hierarchical in-context RL agents for text environments, with hindsight
//! modular reflection between episodes.

pub mod backend;
pub mod cli;
pub mod engine;
pub mod envs;
pub mod harness;
pub mod hmr;
pub mod memory;
pub mod promptkit;
pub mod types;
