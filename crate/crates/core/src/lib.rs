//! Multi-kernel GPU workload generation and power-performance analysis.
pub mod config;
pub mod ensemble;
pub mod ingest;
pub mod metrics;
pub mod pairgen;
pub mod report;
pub mod statkit;
pub mod streamsim;
