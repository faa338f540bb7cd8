//! Criterion benchmarks for the gate-level and pulse-level layers. See `benches/`.
