//! Benchmark worlds.

pub mod grid;
pub mod load;
