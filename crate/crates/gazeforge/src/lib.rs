//! HTTP service and command line over the saliency-guidance library.

pub mod cli;
pub mod config;
pub mod error;
pub mod ops;
pub mod server;
pub mod session;

pub use config::Config;
pub use error::{AppError, Result};
pub use ops::Engine;
