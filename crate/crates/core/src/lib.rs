pub mod app;
pub mod error;
pub mod generative;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod stats;
pub mod synthetic;
pub mod traversal;

pub use error::{Error, Result};
