use thiserror::Error;

/// Errors raised by the tracking, identification and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error(
        "{what} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    Divergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("closed loop is not stable: spectral radius {rho:.12}")]
    Unstable { rho: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("data is not persistently exciting: sigma_min(Lambda) = {sigma_min:.3e}")]
    RankDeficient { sigma_min: f64 },

    #[error("policy violates the affine constraints: |X0 V - I| = {v_residual:.3e}, |X0 H| = {h_residual:.3e}")]
    ConstraintViolation { v_residual: f64, h_residual: f64 },

    #[error("matrix {0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("reference table has {len} entries, index {index} out of range")]
    OutOfRange { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state diverged at t = {t}: |x| = {norm:.3e}")]
    BlowUp { t: usize, norm: f64 },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(
    context: &'static str,
    actual: (usize, usize),
    expected: (usize, usize),
) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        });
    }
    Ok(())
}
