//! Command-line and HTTP front ends for the duality engine.

pub mod api;
pub mod cli;
pub mod service;
pub mod wire;
