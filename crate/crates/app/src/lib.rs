//! Configuration, orchestration and file outputs for the `segrekin`
//! command-line tool.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use error::AppError;
