//! Crate-wide error type.
//!
//! All fallible operations return [`RodError`]. Geometric preconditions
//! (skewness, unit norms, map compatibility) are checked against explicit
//! tolerances and never silently regularized.

use thiserror::Error;

/// Errors produced by rod-mechanics operations.
#[derive(Debug, Error)]
pub enum RodError {
    /// A vector with zero (or non-finite) norm cannot be normalized.
    #[error("cannot normalize a zero or non-finite vector (|v| = {norm:e})")]
    ZeroVector { norm: f64 },

    /// The matrix handed to `axial` is not skew-symmetric.
    #[error("matrix is not skew-symmetric (max |W + Wᵀ| entry = {asymmetry:e})")]
    NotSkewSymmetric { asymmetry: f64 },

    /// The matrix is not a proper rotation (orthonormality or determinant).
    #[error("matrix is not a proper rotation (|MᵀM - I| = {orthogonality_defect:e}, det = {det})")]
    InvalidRotation { orthogonality_defect: f64, det: f64 },

    /// The drill-free map is singular for (nearly) antipodal directors.
    #[error("drill-free map is undefined for antipodal directors (d0·d = {dot})")]
    SingularDrillFreeMap { dot: f64 },

    /// The operator does not map the source director to the target director.
    #[error("operator does not map source to target director (|T d0 - d| = {defect:e})")]
    NotASplittingMap { defect: f64 },

    /// A sampled curve violates regularity (|r'| > 0) or ordering of s.
    #[error("curve regularity violated at sample {index}: {reason}")]
    IrregularCurve { index: usize, reason: String },

    /// Mismatched or malformed grids/sample arrays.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Invalid input outside the geometric categories above.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Newton iteration exhausted its budget. Carries the best iterate's
    /// diagnostics so callers can report partial progress.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate report, boxed to keep the error small.
        report: Box<crate::static_solver::SolveReport>,
    },

    /// Dynamic step failed to converge.
    #[error("time step at t = {time} did not converge after {iterations} iterations (residual {residual:e})")]
    StepNonConvergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    /// The KKT matrix of the constrained solver is numerically singular.
    #[error("KKT matrix is singular or badly conditioned (pivot {pivot:e} at column {column})")]
    SingularKkt { pivot: f64, column: usize },

    /// Load continuation finished without finding a stability change.
    #[error("no buckling load detected in [{lo}, {hi}] ({steps} steps)")]
    BucklingNotDetected { lo: f64, hi: f64, steps: usize },
}
