//! Mellin-transform families, coupled boundary samplers and polymer partition
//! functions on the quadrant, with tooling to check cumulant identities by
//! simulation.

pub mod coupling;
pub mod cumulants;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod identities;
pub mod lattice;
pub mod mellin;
pub mod partition;
pub mod polynomials;
pub mod quadrature;
pub mod quenched;
pub mod rng;
pub mod special;
pub mod stats;
pub mod symbolic;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{Environment, ModelKind, ModelSpec};
pub use mellin::{KernelKind, MellinFamily};
