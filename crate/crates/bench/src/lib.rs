//! Criterion benchmarks for the collocation kernels; see `benches/kernels.rs`.
