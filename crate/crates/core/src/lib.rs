pub mod error;
pub mod kernel;
pub mod quadrature;

pub use error::{Error, Result};
pub mod monotone;
pub mod domain;
pub mod mesh;
pub mod sparse;
pub mod system;
pub mod diagnostics;
pub mod solver;
