//! Numerical engine for the wheel of duality in consumer theory.

pub mod error;
pub mod expr;
pub mod families;
pub mod numkit;
pub mod verify;
pub mod wheel;

pub use error::{Error, Result};
