//! Library side of the benchmark CLI: configuration, experiment drivers,
//! and report emission. The binary in `main.rs` is a thin argument layer
//! over these functions, which the integration suites call directly.

pub mod config;
pub mod experiments;
pub mod report;
