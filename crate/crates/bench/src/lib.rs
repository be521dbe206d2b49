//! Benchmark-only crate; see `benches/receiver.rs`.
