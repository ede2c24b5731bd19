//! Discrete-velocity laboratory for a coupled forward-backward Boltzmann
//! system and the Hamilton-Jacobi functional it generates.
//!
//! The pipeline: discretize (x, v, omega) with a conservative collision
//! truncation, build the biased collision operator and the Grad-decomposed
//! semigroups e^{sB+-}, solve the two-point perturbation system by Picard
//! iteration on the fixed-point map Gamma, then evaluate the functional
//! I(t, g) by two independent formulas together with its stationary limit
//! and the mild Hamilton-Jacobi residual.

pub mod collision;
pub mod equilibria;
pub mod error;
pub mod field;
pub mod functional;
pub mod grid;
pub mod oracle;
pub mod scenario;
pub mod solver;
pub mod transport;

pub use error::{LabError, Result};
