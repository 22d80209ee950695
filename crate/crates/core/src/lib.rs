pub mod bvp1d;
pub mod config;
pub mod error;
pub mod eulerflow;
pub mod geometry;
pub mod io;
pub mod nonlinearity;
pub mod pipeline;
pub mod strip2d;

pub use error::{Error, Result};
pub use nonlinearity::{Mode, ProblemSpec};
