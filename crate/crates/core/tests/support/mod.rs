//! Shared oracles and fixtures for the integration and acceptance tests.
#![allow(dead_code)]

pub mod checks;
pub mod fixtures;
pub mod oracles;
pub mod stats;
