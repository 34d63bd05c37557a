pub mod cli;
pub mod error;
pub mod field_solver;
pub mod generators;
pub mod jet;
pub mod model;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
