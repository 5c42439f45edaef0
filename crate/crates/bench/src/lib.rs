//! Benchmark harness for the mini-batch SSP solver: single runs, batch-size sweeps,
//! config validation and instance generation.

pub mod cache;
pub mod commands;
pub mod sweep;
