//! Criterion benchmarks for the inference and training kernels; see
//! `benches/inference.rs`.
