//! Holds the acceptance test binary (`tests/acceptance.rs`); no library code.
