use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested displacement or amplitude is too large for the
    /// truncated space. Spaces built with `allow_truncation_risk` skip this.
    #[error("truncation risk: |alpha|^2 = {norm_sqr:.4} exceeds the safe limit {limit:.4} of a {levels}-level space")]
    TruncationRisk { norm_sqr: f64, limit: f64, levels: usize },

    #[error("integration did not converge: halved-step trace distance {residual:.3e} exceeds tolerance {tol:.3e}")]
    Integration { residual: f64, tol: f64 },

    #[error("integration lost positivity: eigenvalue {min_eigenvalue:.3e} is below -{tol:.1e}")]
    Positivity { min_eigenvalue: f64, tol: f64 },

    #[error("displacement calibration did not converge (residual {residual:.3e})")]
    Calibration { residual: f64 },

    #[error("rank-deficient design: {rank} of {params} parameters determined; undetermined subspace: {subspace}")]
    RankDeficient {
        rank: usize,
        params: usize,
        subspace: String,
    },

    #[error("analysis fit failed: {0}")]
    Analysis(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
