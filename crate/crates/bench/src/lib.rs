//! Criterion benchmarks for the magweyl kernels live in `benches/kernels.rs`.
