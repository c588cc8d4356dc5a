//! Criterion benchmarks for the cache engines; see `benches/fetch.rs`.
