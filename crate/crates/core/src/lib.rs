//! Optimal kernel-based dynamic mode decomposition (OK-DMD).

// Links the system BLAS/LAPACK used by the eigen-solver.
extern crate openblas_src;

pub mod error;
pub mod io;
pub mod baselines;
pub mod kernels;
pub mod lbfgs;
pub mod linalg;
pub mod okdmd;
pub mod preimage;
pub mod snapshots;
pub mod synthgen;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
