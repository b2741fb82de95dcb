pub mod collision;
pub mod domain;
pub mod equilibrium;
pub mod error;
pub mod hydro;
pub mod kac;
pub mod kinetic;
pub mod spectral;

pub use error::{Error, Result};
