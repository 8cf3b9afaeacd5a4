//! Criterion benchmarks for the pose pipeline; see `benches/`.
