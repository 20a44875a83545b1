//! Numerical minimization of rotating Gross–Pitaevskii and density-matrix
//! functionals for a trapped dilute Bose gas.

pub mod channel;
pub mod discretization;
pub mod dm;
pub mod error;
pub mod gp3d;
pub mod io;
pub mod linalg;
pub mod phase;
pub mod stability;
pub mod toy;

pub use error::{Error, Result};
