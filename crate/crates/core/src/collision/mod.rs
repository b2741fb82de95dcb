//! Collision operators: Maxwellians and moments, the exact binary collision
//! quadrature, the BGK surrogate, entropy production, linearized operators
//! and transport coefficients.

mod bgk;
mod boltzmann;
mod linear;
mod maxwellian;
mod quadrature;
mod transport;

pub use bgk::*;
pub use boltzmann::{boltzmann_j, invariant_moments, CollisionTable, PairTerms};
pub use linear::*;
pub use maxwellian::*;
pub use quadrature::*;
pub use transport::*;
