//! Environment generators.

pub mod nas;
pub mod synthetic;
