//! Gridless estimation of linear-chirp parameters.
//!
//! A mixture of `K` linear chirps `x(n) = sum_k c_k exp(j2pi(f_k n + theta_k n^2))`
//! is lifted to a structured measurement of a two-dimensional line spectrum.
//! Recovery is posed as a constrained two-dimensional atomic norm minimization,
//! solved through semidefinite programming with a rate band `theta in [0, U]`
//! enforced by a degree-one trigonometric polynomial. The library bundles:
//!
//! * [`model`]: signal synthesis, atoms, the selection operator `P` and its
//!   adjoint, and seeded noise injection;
//! * [`toeplitz`]: one-fold / two-fold Toeplitz maps, their `g`-transformed
//!   variants and all adjoints;
//! * [`conic`]: assembly of the full and decoupled SDPs as real-embedded
//!   conic programs;
//! * [`sdpa`]: SDPA sparse-format export/import for cross-validation;
//! * [`solver`]: a first-order operator-splitting solver (affine projection /
//!   PSD projection with dual updates);
//! * [`certificate`]: the dual polynomial `Q(f, theta)`, support extraction
//!   and optimality verification;
//! * [`baseline`]: a discretized basis-pursuit baseline for basis-mismatch
//!   comparison;
//! * [`experiment`]: end-to-end pipeline runs, matching metrics and
//!   plot-ready artifact emission.

pub mod baseline;
pub mod certificate;
pub mod conic;
pub mod experiment;
pub mod model;
pub mod par;
pub mod sdpa;
pub mod solver;
pub mod toeplitz;

mod error;

pub use error::{Error, Result};

pub use model::{ChirpComponent, ChirpScene, Measurements, ProblemDims};
pub use solver::{SolverOptions, SolverResult, SolverStatus};
