pub mod cli;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod simgen;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Tensor};
