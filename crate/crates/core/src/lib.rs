pub mod altmix;
pub mod autodiff;
pub mod config;
pub mod diagnostics;
pub mod episodes;
pub mod error;
pub mod experiments;
pub mod imp;
pub mod metrics;
pub mod model;
pub mod protonets;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
