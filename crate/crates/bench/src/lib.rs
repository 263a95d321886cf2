//! Criterion benchmarks for the filter core live in `benches/`.
