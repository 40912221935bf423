//! Inexact interior point methods for linear programs.
//!
//! Predictor-corrector path following in the `N₂` neighborhood, driven by the
//! normal equations `AD²Aᵀ Δy = p`. These are solved either directly, by
//! sketch-preconditioned conjugate gradient, or by a perturbation oracle
//! that injects an error of prescribed size. The error-adjusted variant keeps
//! every iterate exactly primal feasible.

pub mod driver;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod normal_eq;
pub mod pcg;
pub mod reductions;
pub mod rng;
pub mod sketch;

pub use error::{IpmError, Result};
pub use model::{LinearProgram, PrimalDualPoint};
