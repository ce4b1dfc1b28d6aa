pub mod cells;
pub mod data;
pub mod error;
pub mod features;
pub mod harness;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
