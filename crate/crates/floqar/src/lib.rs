//! Floquet multipliers and invariant subspaces of linear periodic time-varying
//! systems, computed from discrete samples of the system matrix.
//!
//! Given samples `G(t_i)` of a `T`-periodic matrix function on a (possibly
//! non-uniform) time grid, the state equation `x' = G(t) x` is discretized with
//! a variable-step BDF method of order 1 to 4. The resulting `d`-step recursion
//! is a periodic polynomial eigenvalue problem; its companion linearization is
//! a cyclic product of `p` block companion matrices `L⁽ⁱ⁾` whose product
//! eigenvalues approximate the Floquet multipliers `ρ = exp(μT)` at the order
//! of the method. Two solver paths are provided:
//!
//! * a dense path that forms the companion blocks and runs a periodic QR
//!   iteration ([`pschur`]), suitable for `n·d` up to a couple thousand, and
//! * an iterative path ([`ptoar`]) that runs a two-level compressed periodic
//!   Arnoldi iteration on the implicit companion operator, storing one shared
//!   `n`-row basis per slice instead of `n·d` rows.
//!
//! Products of `p` numbers overflow `f64` long before they stop being
//! meaningful, so product eigenvalues are carried as [`scaled::ExponentScaled`]
//! values (complex mantissa plus a separate power-of-two exponent).
//!
//! The crate also ships the supporting pieces used by the command line tool:
//! spurious-root prediction for the discretization's artificial eigenvalues
//! ([`spurious`]), index-1 DAE decoupling ([`dae`]), benchmark generators with
//! known exact solutions ([`bench`]), and Matrix Market / manifest I/O ([`io`]).

pub mod bench;
pub mod dae;
pub mod floquet;
pub mod grid;
pub mod io;
pub mod lptv;
pub mod multistep;
pub mod pschur;
pub mod ptoar;
pub mod scaled;
pub mod sparse;
pub mod spurious;

pub use floquet::{FloquetSolution, SolverChoice};
pub use grid::PeriodicGrid;
pub use lptv::{CompanionOperator, SampledLptvSystem};
pub use multistep::MultistepScheme;
pub use ptoar::{solve_dominant, PtoarResult, RitzPair};
pub use scaled::ExponentScaled;
pub use spurious::SpectrumTag;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the numerical pipeline so callers (and the CLI exit codes) can tell a bad
/// grid from a singular step from a solver that ran out of iterations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stepsize ratio {ratio:.6} at step {step} lies outside the band [{min}, {max}]")]
    RatioOutOfBand {
        step: usize,
        ratio: f64,
        min: f64,
        max: f64,
    },

    #[error("order-condition system is singular for the supplied stencil")]
    DegenerateStencil,

    #[error("shifted matrix I - dt*beta*G is numerically singular at slice {slice}; reduce the stepsize")]
    IllPosedStep { slice: usize },

    #[error("dense path refused: n*d = {nd} exceeds the dense-work guard {guard}")]
    SizeGuard { nd: usize, guard: usize },

    #[error("periodic QR did not converge within {sweeps} sweeps")]
    IterationLimit { sweeps: usize },

    #[error("eigenvalue swap at position {position} rejected: relation residual {residual:.3e}")]
    ReorderFailure { position: usize, residual: f64 },

    #[error("subspace iteration stalled: {got} of {wanted} pairs converged after {cycles} restart cycles")]
    NotConverged {
        wanted: usize,
        got: usize,
        cycles: usize,
    },

    #[error("shooting did not converge: residual {residual:.3e} after {iterations} Newton iterations")]
    OrbitNotFound { iterations: usize, residual: f64 },

    #[error("C11 or G22 block is singular at slice {slice}; the pair is not semi-explicit index one on this grid")]
    IndexViolation { slice: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
