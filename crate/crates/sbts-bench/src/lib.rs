//! Benchmark-only crate; see benches/generation.rs.
