//! Acceptance suite for `toepcov`; see `tests/acceptance.rs`.
