//! Error type shared by all modules.

use thiserror::Error;

/// Failure modes of the laboratory operations.
///
/// Preconditions are checked, not assumed: a violated precondition carries
/// enough context (offending sites, worst residuals, spectral windows) for the
/// caller to diagnose the run instead of re-deriving it.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("potential validation failed: {0}")]
    ValidationFailed(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("energy {energy} is within {dist:e} of the spectrum (tolerance {tol:e})")]
    SingularEnergy { energy: f64, dist: f64, tol: f64 },

    #[error("eigenvalue too close to degenerate: gap {gap:e} below {required:e}")]
    DegenerateEigenvalue { gap: f64, required: f64 },

    #[error("branch continuation ambiguous at {ambiguous} of {total} grid points; refine the grid")]
    ContinuationAmbiguous { ambiguous: usize, total: usize },

    #[error("monotonicity structure violation: {0}")]
    StructureViolation(String),

    #[error("resonance cover infeasible: {0}")]
    CoverInfeasible(String),

    #[error("interlacing construction failed: {0}")]
    InterlacingFailed(String),

    #[error("domain adjustment failed: {0}")]
    AdjustFailed(String),

    #[error("generation invalid: {0}")]
    GenerationInvalid(String),

    #[error("too close to crossing point: |theta - theta_s| = {dist:e} < {required:e}")]
    TooCloseToCrossing { dist: f64, required: f64 },

    #[error("all values below underflow floor; decay rate degenerate")]
    UnderflowDegenerate,

    #[error("resolvent deformation insufficient: {0}")]
    DeformationInsufficient(String),

    #[error("spectral gap detected: {0}")]
    GapDetected(String),

    #[error("missing configuration: {0}")]
    MissingConfig(String),
}
