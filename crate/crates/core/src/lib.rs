//! Green's function defect `q_eps(x, y, T)` for one-dimensional diffusions
//! `dY = (A(t) Y + c) dt + sqrt(eps) dB` with absorption at the origin.
//!
//! The Dirichlet Green's function on the half line factorizes against the
//! whole-line (Gaussian) one as
//!
//! ```text
//! G_D(x, y, 0, T) = { 1 - exp[-q_eps(x, y, T) / eps] } * G(x, y, 0, T),
//! ```
//!
//! and this crate computes `q_eps` by three independent routes and
//! machine-checks the bounds, identities and limits that relate them:
//!
//! * [`coeffs`] — the coefficient cache: `m1`, `m2`, `sigma2`, the
//!   `g1/g2/g3` combinations, the bridge drift `lambda`, the conditioned
//!   mean path and covariance, all built from three cumulative integrals
//!   of the drift coefficient `A(.)`.
//! * [`oracles`] — exact special cases (Brownian bridge, Ornstein-Uhlenbeck,
//!   the linear Hamilton-Jacobi solution) used as ground truth.
//! * [`variational`] / [`characteristics`] — the zero-noise limit `q_0` via
//!   1-D minimization over the hitting time and via the method of
//!   characteristics, with exact first and second x-derivatives and fold
//!   detection.
//! * [`pde`] — `q_eps` for `eps > 0` from a regularized HJB terminal-layer
//!   solve (explicit upwind advection, θ-implicit diffusion).
//! * [`mc`] — an exact-Gaussian conditioned-bridge Monte Carlo estimate of
//!   the survival probability, with first-passage crossing correction.
//! * [`verify`] — the bound/limit checking suite producing machine-readable
//!   reports.

pub mod characteristics;
pub mod coeffs;
pub mod drift;
pub mod mc;
pub mod numeric;
pub mod oracles;
pub mod pde;
pub mod rng;
pub mod variational;
pub mod verify;

pub use coeffs::{BoundConstants, CoeffError, CoefficientTable};
pub use drift::{DriftKind, DriftModel};
pub use mc::{McConfig, McError, McEstimate};
pub use pde::{PdeConfig, PdeError, PdeSolution};
pub use variational::{Method, MinimizeOpts, VarError, VariationalSolution};
pub use verify::BoundReport;
