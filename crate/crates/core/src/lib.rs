pub mod env;
pub mod eval;
pub mod cli;
pub mod error;
pub mod instance;
pub mod numerics;
pub mod policy;
pub mod rules;
pub mod train;

pub use error::{Error, Result};
