//! Error type shared by the whole library.
//!
//! Errors are split roughly into *validation* failures (bad input: wrong
//! dimensions, coarse grids, malformed expressions) and *numerical* failures
//! (solver stagnation, loss of positivity, violated smallness conditions).
//! The CLI maps the two groups onto distinct exit codes.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum HomogError {
    /// Grid resolution is unusable (too coarse, odd, or zero-dimensional).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An axis index was outside `0..dim`.
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    /// Two objects that must share a grid (or a dimension) do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A coefficient field failed the pointwise symmetric-positive-definite check.
    #[error("coefficient matrix not positive definite at node {node}: min eigenvalue {min_eig:.3e}")]
    NotPositiveDefinite { node: usize, min_eig: f64 },

    /// A sampled field contained NaN/inf (division by zero, log of nonpositive value).
    #[error("non-finite sample at node {node}: {context}")]
    NonFiniteSample { node: usize, context: String },

    /// Iterative solver failed to reach the requested residual.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NonConvergence {
        residual: f64,
        iterations: usize,
        tol: f64,
    },

    /// Right side of a singular solve is not orthogonal to the invariant measure.
    #[error("incompatible right side: weighted mean {value:.3e} exceeds tolerance {tol:.3e}")]
    Incompatible { value: f64, tol: f64 },

    /// Computed invariant measure had nonpositive entries (under-resolved grid).
    #[error("invariant measure nonpositive (min {min:.3e}); refine the grid")]
    NonPositiveMeasure { min: f64 },

    /// A construction's smallness condition failed for the requested strength.
    #[error("smallness condition violated: s = {s:.3e} exceeds the admissible maximum {max_admissible:.3e}")]
    SmallnessViolated { s: f64, max_admissible: f64 },

    /// A construction received parameters outside its admissible bounds.
    #[error("parameter out of bounds: {0}")]
    BoundsViolated(String),

    /// The constructed perturbation is degenerate (nothing to perturb with).
    #[error("degenerate construction: {0}")]
    DegenerateConstruction(String),

    /// Divisibility rules between mesh size, period, and sampling grid failed.
    #[error("divisibility violated: {0}")]
    Divisibility(String),

    /// Expression parsing failed.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// An expression referenced a variable that the target grid does not have.
    #[error("variable {name} not available in dimension {dim}")]
    UnknownVariable { name: String, dim: usize },

    /// Serialization/deserialization of a coefficient description failed.
    #[error("spec error: {0}")]
    Spec(String),
}

impl HomogError {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HomogError::InvalidGrid(_)
                | HomogError::AxisOutOfRange { .. }
                | HomogError::DimensionMismatch(_)
                | HomogError::BoundsViolated(_)
                | HomogError::Divisibility(_)
                | HomogError::Parse { .. }
                | HomogError::UnknownVariable { .. }
                | HomogError::Spec(_)
        )
    }

    /// Machine-readable error kind for structured reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            HomogError::InvalidGrid(_) => "invalid_grid",
            HomogError::AxisOutOfRange { .. } => "axis_out_of_range",
            HomogError::DimensionMismatch(_) => "dimension_mismatch",
            HomogError::NotPositiveDefinite { .. } => "not_positive_definite",
            HomogError::NonFiniteSample { .. } => "non_finite_sample",
            HomogError::NonConvergence { .. } => "non_convergence",
            HomogError::Incompatible { .. } => "incompatible_right_side",
            HomogError::NonPositiveMeasure { .. } => "non_positive_measure",
            HomogError::SmallnessViolated { .. } => "smallness_violated",
            HomogError::BoundsViolated(_) => "bounds_violated",
            HomogError::DegenerateConstruction(_) => "degenerate_construction",
            HomogError::Divisibility(_) => "divisibility_violated",
            HomogError::Parse { .. } => "parse_error",
            HomogError::UnknownVariable { .. } => "unknown_variable",
            HomogError::Spec(_) => "spec_error",
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, HomogError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_classification_separates_numerical_errors() {
        assert!(HomogError::InvalidGrid("n odd".into()).is_validation());
        assert!(HomogError::Parse { pos: 3, msg: "x".into() }.is_validation());
        assert!(!HomogError::NonConvergence { residual: 1.0, iterations: 5, tol: 1e-10 }
            .is_validation());
        assert!(!HomogError::SmallnessViolated { s: 0.05, max_admissible: 0.003 }.is_validation());
    }

    #[test]
    fn kinds_are_stable_strings() {
        assert_eq!(HomogError::NonPositiveMeasure { min: -0.1 }.kind(), "non_positive_measure");
        assert_eq!(
            HomogError::Incompatible { value: 1.0, tol: 0.1 }.kind(),
            "incompatible_right_side"
        );
    }
}
