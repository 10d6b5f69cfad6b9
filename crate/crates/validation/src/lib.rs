//! Acceptance gate for the workspace. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p qrng-validation`; each criterion prints one
//! PASS or FAIL line.
