//! Configuration, orchestration and output for the `mtlab` binary.

pub mod config;
pub mod emit;
pub mod suite;
