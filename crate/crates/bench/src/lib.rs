//! Benchmark-only crate; see `benches/kernels.rs`.
//!
//! The probability benchmark doubles as the scaling check for the transfer
//! sweep: per-sequence cost should grow linearly in the chain length and
//! polynomially (not exponentially) in the bond dimension.
