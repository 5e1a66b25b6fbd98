use thiserror::Error;

/// Errors raised by the model, solvers and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("solver did not converge: {message} (last residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("ambiguous result: {message}; roots {roots:?}")]
    Ambiguous { message: String, roots: Vec<f64> },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s), state {state:?}")]
    Stiffness { t: f64, h: f64, state: Vec<f64> },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::Domain(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::Domain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}
