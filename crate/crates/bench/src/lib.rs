//! Benchmark-only crate; see `benches/run_criterion.rs`.
