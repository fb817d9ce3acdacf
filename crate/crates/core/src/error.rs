use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mass matrix E is numerically singular (pivot ratio {0:e})")]
    SingularMass(f64),

    #[error("point is not an equilibrium: residual {residual:e} exceeds {bound:e}")]
    NotEquilibrium { residual: f64, bound: f64 },

    #[error("linear part is not Hurwitz: largest real part of the spectrum is {max_real:e}")]
    UnstableLinearPart { max_real: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("QR iteration did not converge")]
    SchurNoConvergence,

    #[error("eigenvalue reordering failed at position {position} (eigenvalue gap {gap:e})")]
    ReorderFailed { position: usize, gap: f64 },

    #[error("riccati solver: {0}")]
    Riccati(String),

    #[error("matrix is numerically zero")]
    ZeroMatrix,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
