//! Benchmarks for the satflux solver; see `benches/`.
