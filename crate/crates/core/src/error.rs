//! Error type shared by all modules.

use std::fmt;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or using the dressed-operator
/// pipeline. Variants are grouped by origin: input/geometry problems, model
/// assumption violations (separability, sign structure) and numerical
/// failures (factorization, convergence, stability).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Domain, resolution or sample-array shapes do not agree.
    DomainMismatch(String),
    /// Two fields that must share a grid do not.
    GridMismatch(String),
    /// Tangent vectors are (numerically) linearly dependent at a node.
    DegenerateFrame { i1: usize, i2: usize },
    /// A drive was requested but the projected tangential field vanishes
    /// identically.
    ZeroField,
    /// The displacement shape does not satisfy the per-axis separability
    /// condition; the reported number is the largest commutator residual.
    NonSeparable { max_residual: f64 },
    /// A displacement component changes sign inside the requested interval,
    /// so the Abel integral would cross a divergence.
    SignChange { axis: usize, coord: f64 },
    /// A flow left the tabulated range of an Abel map (or a field grid) and
    /// the caller asked for strict evaluation.
    RangeExceeded { axis: usize, coord: f64 },
    /// Unsupported boundary-condition combination for assembly.
    UnknownBoundary(String),
    /// An eigensolve delivered fewer converged pairs than requested.
    NotConverged { converged: usize, requested: usize },
    /// A direct factorization broke down (near-singular pivot).
    Factorization(String),
    /// Time propagation lost unitarity beyond the configured guard.
    Unstable { step: usize, norm: f64 },
    /// Catch-all for invalid parameters with a human-readable reason.
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DomainMismatch(s) => write!(f, "domain mismatch: {s}"),
            Error::GridMismatch(s) => write!(f, "grid mismatch: {s}"),
            Error::DegenerateFrame { i1, i2 } => {
                write!(f, "degenerate tangent frame at node ({i1}, {i2})")
            }
            Error::ZeroField => write!(f, "projected drive field vanishes identically"),
            Error::NonSeparable { max_residual } => write!(
                f,
                "displacement shape is not separable (max commutator residual {max_residual:.3e})"
            ),
            Error::SignChange { axis, coord } => write!(
                f,
                "displacement component along axis {axis} changes sign near q = {coord:.6}"
            ),
            Error::RangeExceeded { axis, coord } => write!(
                f,
                "flow left the tabulated range on axis {axis} (target coordinate {coord:.6})"
            ),
            Error::UnknownBoundary(s) => write!(f, "unsupported boundary combination: {s}"),
            Error::NotConverged { converged, requested } => write!(
                f,
                "eigensolver converged {converged} of {requested} requested pairs"
            ),
            Error::Factorization(s) => write!(f, "factorization failed: {s}"),
            Error::Unstable { step, norm } => write!(
                f,
                "propagation unstable at step {step} (norm {norm:.6e})"
            ),
            Error::InvalidInput(s) => write!(f, "invalid input: {s}"),
        }
    }
}

impl std::error::Error for Error {}
