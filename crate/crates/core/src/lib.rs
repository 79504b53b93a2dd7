pub mod autograd;
pub mod conv;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod render;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
