//! Finite-precision Metropolis–Hastings sampling and mixed-precision
//! variational Monte Carlo for small spin systems.

pub mod ansatz;
pub mod bounds;
pub mod error;
pub mod hamiltonians;
pub mod lattice;
pub mod precision;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod vmc;

pub use error::{Error, Result};
pub use lattice::{Boundary, LatticeSpec, SpinConfiguration};
pub use precision::{FloatFormat, RoundingMode};
