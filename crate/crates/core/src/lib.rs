pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod losses;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod slci;
pub mod superpixel;
pub mod tensor;

pub use error::{DiscError, Result};
pub use tensor::Tensor;
