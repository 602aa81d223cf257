//! MAP state smoothing for linear systems with log-concave noise, the dual
//! optimal-control problem, strong-duality certificates, and reconstruction of
//! state estimates from dual solutions.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the linear time-varying system and supervector algebra.
//! - [`penalty`]: convex penalties with conjugates and proximal maps.
//! - [`problems`]: the primal smoothing program and its dual control program.
//! - [`solver`]: a primal-dual hybrid gradient solver, a direct oracle for
//!   quadratic instances, and dual-to-primal reconstruction.
//! - [`logconcave`]: the univariate log-concave maximum-likelihood density.
//! - [`sim`]: seeded simulation of trajectories and measurements.
//! - [`scenario`]: JSON scenario and CSV input decoding.

// `!(a > b)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ext;
pub mod logconcave;
pub mod model;
pub mod penalty;
pub mod problems;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use ext::ExtReal;
pub use logconcave::{exp_integral, fit_logconcave_mle, MleDensity};
pub use model::{BlockMatrix, BlockStructure, LinearSystem, Supervector};
pub use penalty::{Penalty, SeparablePenalty};
pub use problems::{
    CertificateStatus, DualProblem, DualityCertificate, PrimalProblem, Witness,
};
pub use sim::{NoiseSpec, Rng, Simulation};
pub use solver::{Solution, SolverOptions, StopReason};
