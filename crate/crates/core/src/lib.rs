//! Numerics for multi-marginal optimal transport with Coulomb cost and the
//! semiclassical limit of the constrained-search density functional.

pub mod cli;
pub mod discretization;
mod linalg;
pub mod error;
pub mod fermionize;
pub mod harriman;
pub mod io;
pub mod lawrentiev;
pub mod plan;
pub mod reinstate;
pub mod sce;
pub mod semiclassical;
pub mod verify;
mod tensor;

pub use error::{LabError, Result};
