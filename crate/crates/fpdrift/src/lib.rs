//! Nonparametric drift estimation for scalar stochastic differential
//! equations from i.i.d. observations of their state distribution.
//!
//! The model is `dX_t = mu(X_t) dt + sigma dW_t` on a bounded interval
//! `D = (a, b)`. Observations are draws from the stationary distribution of
//! the process (or from its law at a fixed time for ensembles of paths).
//! The estimator treats the drift-to-density map as a forward operator: the
//! stationary Fokker-Planck equation with no-flux boundary conditions is
//! solved by a cubic finite element method, and the drift is recovered by an
//! iteratively regularized Newton method whose data term is a penalized
//! negative log-likelihood (a shifted Kullback-Leibler fidelity). A quadratic
//! fidelity against a kernel density estimate is provided as a baseline, and
//! [`experiments`] runs Monte-Carlo comparisons of the two.
//!
//! Module layout mirrors the pipeline:
//!
//! * [`mesh`]: 1D meshes, cubic Lagrange functions, Gauss quadrature.
//! * [`linalg`]: banded matrices, banded Cholesky, dense LU, CG.
//! * [`fem`]: Fokker-Planck assembly, stationary/parabolic solves, the
//!   linearized forward map and its adjoint.
//! * [`sde`]: Euler-Maruyama paths, thinning, ensembles of terminal values.
//! * [`fidelity`]: likelihood, shifted KL divergences, quadratic fidelity.
//! * [`penalty`]: H1 regularization and Bregman distances.
//! * [`inversion`]: the outer Newton iteration and its two inner solvers.
//! * [`presets`]: named drifts and model configs shared by the CLI.
//! * [`experiments`]: Monte-Carlo study harness and report generation.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod fidelity;
pub mod inversion;
pub mod linalg;
pub mod mesh;
pub mod penalty;
pub mod presets;
pub mod sde;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
