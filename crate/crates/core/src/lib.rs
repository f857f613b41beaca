//! Classical and quasi-classical dynamics of a relativistic spinning
//! particle in a Coulomb field.

pub mod analytics;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod quantization;

pub use error::{Error, Result};
pub use model::{ConservedSet, HalfInt, ModelParams, PhaseState, QuantumNumbers, Toggles, Vec3};
