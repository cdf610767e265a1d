//! Acceptance checks for `asep-core` live in `tests/acceptance.rs`.
