//! Benches-only package; see `benches/sets.rs`.
