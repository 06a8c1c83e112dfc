//! Criterion benchmarks for the labeling and kernel hot paths; see `benches/`.
