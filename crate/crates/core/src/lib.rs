pub mod boost;
pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod reduce;
pub mod weak;

pub use error::{Error, Result};
