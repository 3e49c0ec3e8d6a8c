//! Trajectory dataset characterization and spatial index benchmarking.

pub mod bench;
pub mod datagen;
pub mod dataset;
pub mod engine;
pub mod geom;
pub mod index;
pub mod metrics;
pub mod report;
pub mod workload;
