pub mod aggregation;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod numeric;
pub mod retrieval;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
