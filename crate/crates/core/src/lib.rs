pub mod comparators;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod image;
pub mod index;
pub mod io;
pub mod pipeline;
pub mod registration;
pub mod seed;
pub mod transform;

pub use error::{Error, Result};
