use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input rejected by a precondition check.
    InvalidInput(String),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Spectral radius not strictly below one where a Schur-stable matrix is required.
    NotStable { rho: f64 },
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },
    /// Support function requested in a direction along which the set is unbounded.
    UnboundedSupport,
    /// A Pontryagin difference came out empty in coordinate `coord`.
    EmptyDifference { coord: usize, lower: f64, upper: f64 },
    EmptyTerminalSet,
    /// Numerical breakdown inside an LP or QP solver (distinct from infeasibility).
    SolverFailure(String),
    Infeasible(String),
    /// Dataset too short to build a single full regressor.
    DatasetTooShort { needed: usize, available: usize },
    /// Feasible parameter set unbounded along a canonical direction.
    UninformativeData { p: usize, direction: usize },
    Unsupported(String),
    /// A set inclusion required by the tube construction does not hold.
    InclusionViolated(String),
    /// Multi-step bound exceeded the iterated one-step bound.
    BoundOrderingViolated { p: usize, gap: f64 },
    /// QP became infeasible after a feasible start.
    FeasibilityLost { long_step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::NotStable { rho } => {
                write!(f, "matrix is not Schur stable (spectral radius {rho})")
            }
            Error::NonConvergence { what, iterations } => {
                write!(f, "{what} did not converge within {iterations} iterations")
            }
            Error::UnboundedSupport => write!(f, "support function is unbounded"),
            Error::EmptyDifference {
                coord,
                lower,
                upper,
            } => write!(
                f,
                "Pontryagin difference is empty in coordinate {coord} ([{lower}, {upper}])"
            ),
            Error::EmptyTerminalSet => write!(f, "terminal set is empty"),
            Error::SolverFailure(msg) => write!(f, "solver failure: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::DatasetTooShort { needed, available } => write!(
                f,
                "dataset too short: need at least {needed} samples, have {available}"
            ),
            Error::UninformativeData { p, direction } => write!(
                f,
                "feasible parameter set for p={p} is unbounded along direction {direction}; \
                 collect more informative data"
            ),
            Error::Unsupported(msg) => write!(f, "unsupported configuration: {msg}"),
            Error::InclusionViolated(msg) => write!(f, "set inclusion violated: {msg}"),
            Error::BoundOrderingViolated { p, gap } => write!(
                f,
                "multi-step worst-case bound exceeds the iterated one at p={p} by {gap}"
            ),
            Error::FeasibilityLost { long_step } => {
                write!(f, "MPC problem infeasible at long step {long_step} after a feasible start")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
