//! Criterion benchmarks for `finsler-core`; see `benches/`.
