//! Criterion benchmarks for the harness internals live in `benches/`.
