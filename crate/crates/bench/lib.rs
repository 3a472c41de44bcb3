//! Criterion benchmarks for the cell solver and pointwise laws; see `benches/`.
