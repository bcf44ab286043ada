//! Acceptance suite for `rwplab`; everything lives in `tests/acceptance.rs`.
//!
//! Kept in its own package so that `cargo test --workspace` runs it after
//! the unit and integration tests of the other crates.
