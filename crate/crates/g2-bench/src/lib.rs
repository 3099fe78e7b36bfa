//! Benchmark-only crate; see `benches/graph.rs`.
