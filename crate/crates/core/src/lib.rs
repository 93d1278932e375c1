pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod extract;
pub mod models;
pub mod numcore;

pub use error::{Error, Result};
