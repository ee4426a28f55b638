//! Benchmarks for the hot paths of dbmlab; see `benches/kernels.rs`.
//!
//! Run with `cargo bench -p dbmlab-bench`.
