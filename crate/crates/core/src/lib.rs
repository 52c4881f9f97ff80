//! Effective dynamics of coarse-grained quantum systems.

pub mod channels;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod gamma;
pub mod linalg;
pub mod states;

pub use error::{Error, Result};
