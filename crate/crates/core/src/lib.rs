//! Analysis-sparse signal recovery with a back-projection (B-norm) data
//! fidelity.
//!
//! Given measurements `y = A x* + w` of a signal `x* = D α*` that is sparse
//! under a Parseval-tight dictionary `D`, the crate recovers `x*` by solving
//!
//! ```text
//! minimize  ½‖A x − y‖²_B + λ‖Dᵀ x‖₁,    B = (A Aᵀ)^{-1/2}
//! ```
//!
//! together with the plain least-squares baseline and a diagonally rescaled
//! variant. Under the B-norm the effective sensing matrix `B A` is a Parseval
//! tight frame regardless of how `A` was drawn.
//!
//! Modules:
//! - [`matrixlab`]: dense kernels (eigendecomposition, inverse square root,
//!   pseudoinverse, spectral norm, coherence).
//! - [`frames`]: sensing ensembles, tight DCT dictionaries, B-norm residuals
//!   and fidelity gradients.
//! - [`signalgen`]: synthetic ground truths, SNR-calibrated measurements, RSNR.
//! - [`solvers`]: ISTA, Loris, NESTA and SFISTA in LS / TF / RTF fidelity modes.
//! - [`bounds`]: restricted isometry estimates and performance-bound constants.
//! - [`bench`]: benchmark configuration, λ tuning and reporting.
//! - [`io`]: the `tfsr-matrix v1` binary format and JSON sidecars.

pub mod bench;
pub mod bounds;
pub mod error;
pub mod frames;
pub mod io;
pub mod matrixlab;
pub mod rng;
pub mod signalgen;
pub mod solvers;

pub use error::{Error, Result};
pub use frames::{Distribution, Fidelity, SensingOperator, TightDictionary};
pub use matrixlab::Matrix;
pub use signalgen::ProblemInstance;
pub use solvers::{Algorithm, RecoveryResult, SolverSpec};
