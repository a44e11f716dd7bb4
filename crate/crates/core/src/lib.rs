//! Lyapunov-based orbit tracking for closed quantum systems.
//!
//! A controlled system `i d/dt rho = [H0 + sum_m f_m(t) H_m, rho]` is made to
//! follow a target that evolves freely under the same `H0`. Moving to the
//! interaction picture (and, for non-diagonal mixed targets, to the frame
//! that diagonalizes the target) turns tracking into transfer to a
//! stationary state. The feedback `f_m` descends `V = tr(P rho)` for a
//! designed virtual observable `P`.
//!
//! Modules, bottom-up:
//!
//! - [`hermat`]: dense complex matrices, Hermitian eigensolver, exponentials.
//! - [`model`]: density matrices, the system model, frames, Bloch vectors.
//! - [`lyapunov`]: `V`, its rate, the feedback law, curvature at the target.
//! - [`designer`]: constructions of `P` and convergence certificates.
//! - [`verify`]: checks of the standing assumptions on `H0`, `H_m`, states.
//! - [`simulator`]: fixed-step RK4 closed loop, open-loop replay, diagnostics.

#![forbid(unsafe_code)]

pub mod designer;
mod error;
pub mod hermat;
pub mod lyapunov;
pub mod model;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
pub use hermat::{CMatrix, EigenPair, C64};
