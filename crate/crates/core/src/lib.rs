pub mod data;
pub mod epi;
pub mod error;
pub mod forecast;
pub mod nn;
pub mod policy;
pub mod sim;

pub use error::{Error, ErrorClass, Result};
