use thiserror::Error;

/// Errors produced by grid construction, operator evaluation, and the solver.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value encountered in {context} (max |value| seen: {magnitude:e})")]
    NonFinite { context: String, magnitude: f64 },

    #[error("non-positive eta at space node {space}, velocity node {velocity} (value {value:e}); cannot take log")]
    NonPositiveEta {
        space: usize,
        velocity: usize,
        value: f64,
    },

    #[error("exp overflow in Hamiltonian: max Delta p = {max_delta_p:.3e}; reduce the perturbation scale")]
    HamiltonianOverflow { max_delta_p: f64 },

    #[error(
        "instance too large for the oracle path: {size} velocity nodes exceeds the cap of {cap}"
    )]
    OracleTooLarge { size: usize, cap: usize },

    #[error("solution not converged; functional evaluation rejected")]
    NotConverged,
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
