//! Criterion benchmarks for the transmit chain live under `benches/`.
