//! Error types shared by all simulation modules.

use thiserror::Error;

/// Everything that can go wrong while building states or running trajectories.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    /// Occupation leaked into the top of the truncated basis.
    #[error("truncation exceeded in {context}: {value:.3e} > {limit:.1e}")]
    Truncation {
        context: &'static str,
        value: f64,
        limit: f64,
    },

    /// A state or classical variable left the trusted numerical range.
    #[error("numerical blowup in {context}: {value:.6e}")]
    NumericalBlowup { context: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An operator expected to be Hermitian is not (max entrywise deviation).
    #[error("operator not Hermitian: max deviation {max_dev:.3e}")]
    NonHermitian { max_dev: f64 },

    /// Superposition collapsed to the zero vector before normalization.
    #[error("degenerate superposition: pre-normalization norm {norm:.3e}")]
    DegenerateSuperposition { norm: f64 },

    /// Post-measurement state vanished.
    #[error("degenerate state: post-measurement norm {norm:.3e}")]
    DegenerateState { norm: f64 },

    #[error("unsupported potential for this operation: {kind}")]
    UnsupportedPotential { kind: String },

    #[error("invalid density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A failure inside a trajectory, tagged with the step it happened at.
    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },

    /// More than the tolerated fraction of ensemble members failed.
    #[error("{failed}/{total} trajectories failed; first: {first}")]
    EnsembleFailures {
        failed: usize,
        total: usize,
        #[source]
        first: Box<SimError>,
    },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

impl SimError {
    pub fn at_step(self, step: usize) -> SimError {
        SimError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
