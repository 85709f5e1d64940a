//! Evolutionary equations `(d_t M(d_t) + A) U = F` on exponentially weighted
//! time grids, with companion tools for causal ODEs, matrix-pair DAEs,
//! exponential stability and periodic homogenization.

pub mod asymptotics;
pub mod error;
pub mod dae;
pub mod evo;
pub mod linalg;
pub mod material;
pub mod ode;
pub mod signal;
pub mod spatial;
pub mod time_ops;
pub mod transform;

pub use error::{EvoError, Result};
pub use num_complex::Complex64 as C64;
