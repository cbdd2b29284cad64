//! Criterion benchmarks for the training and evaluation hot paths; see `benches/`.
