//! Barrier construction for nonlinear control systems with mixed
//! state-input constraints.

pub mod error;
pub mod expr;
pub mod hamiltonian;
pub mod integrator;
pub mod minmax;
pub mod model;
pub mod optim;
pub mod tangency;
pub mod verify;

pub use error::{Error, Result};
