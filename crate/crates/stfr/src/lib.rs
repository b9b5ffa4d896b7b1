//! Space-time flux reconstruction solvers for 1D+1 conservation laws.
//!
//! The library discretizes scalar and vector conservation laws on a
//! rectangular space-time domain with a high-order polynomial basis in both
//! space and time. Flux reconstruction acts only in the spatial direction
//! through a filter on the mass matrix, controlled by a correction parameter
//! `c`; the temporal direction is plain discontinuous Galerkin. Two residual
//! forms are provided: a divergence form for linear problems ([`residual`]
//! with [`residual::Scheme::DivergenceFr`]) and a skew-symmetric
//! flux-differencing form with entropy projection for nonlinear entropy
//! stability ([`residual::Scheme::SplitFormFr`]).
//!
//! The implicit space-time system is solved with a Jacobian-free
//! Newton-Krylov method ([`solver`]), either one timeslab at a time (upwind
//! temporal coupling) or globally (two-point temporal coupling).
//!
//! Core numerics are generic over the scalar type through [`Real`];
//! experiments and the CLI use the `f64` aliases exported at the crate root.

use std::fmt;

pub mod basis;
pub mod diagnostics;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod mol;
pub mod operators;
pub mod physics;
pub mod residual;
pub mod solver;
pub mod util;

/// Scalar type of the core numerics: `f32` or `f64`.
///
/// Tolerances used internally (Newton iterations for quadrature nodes,
/// finite-difference steps) are expressed in units of `Self::epsilon()`, so
/// both widths work; the shipped experiments use `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum<Self>
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::NumCast::from(self).unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::NumAssign
        + std::iter::Sum<T>
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value (node counts, ranges, enum combinations).
    #[error("configuration error: {0}")]
    Config(String),
    /// A construction precondition failed (duplicate nodes, singular matrix).
    #[error("construction error: {0}")]
    Construction(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// A state left the admissible set (e.g. nonpositive density or pressure).
    #[error("inadmissible state {state:?}: {detail}")]
    Admissibility { state: Vec<f64>, detail: String },
    /// The nonlinear solve diverged or hit the iteration cap.
    #[error("solver did not converge: {detail} (residual norm {residual_norm:.3e})")]
    NonConvergence { detail: String, residual_norm: f64 },
    /// An explicit time march blew up.
    #[error("instability detected: {0}")]
    Stability(String),
    #[error("model has no exact solution")]
    MissingExactSolution,
}

pub type Result<T> = std::result::Result<T, Error>;

// Concrete aliases for the common scalar width.
pub type Mat64 = linalg::Mat<f64>;
pub type QuadratureRule1D64 = basis::QuadratureRule1D<f64>;
pub type OperatorSet64 = operators::OperatorSet<f64>;
pub type SpaceTimeMesh64 = mesh::SpaceTimeMesh<f64>;
pub type SolutionField64 = residual::SolutionField<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
