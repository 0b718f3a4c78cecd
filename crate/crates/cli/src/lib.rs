//! Config-driven simulation studies and single-series tests for the vMEM
//! Laplace-transform specification tests.

pub mod config;
pub mod figures;
pub mod single;
pub mod study;
