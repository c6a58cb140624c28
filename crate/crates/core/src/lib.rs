pub mod cli;
pub mod distmat;
pub mod error;
pub mod evalgen;
pub mod likelihood;
pub mod priors;
pub mod sampler;
pub mod summaries;

pub use error::{Error, Result};
