use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RomArtifact;
use crate::densela::{self, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;

/// Source of the Lyapunov matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    /// `A^T P E + E^T P A + I = 0`.
    LyapunovIdentity,
    /// `P = Sigma_n`, `Q_f = C` from LQG balancing.
    LqgSigma,
    /// A given `P` with the exact `Q = -(A^T P E + E^T P A)`, which must be
    /// positive definite.
    RiccatiImplied,
}

impl CertificateKind {
    pub const ALL: [Self; 3] = [Self::LyapunovIdentity, Self::LqgSigma, Self::RiccatiImplied];

    pub fn name(self) -> &'static str {
        match self {
            Self::LyapunovIdentity => "lyapunov-identity",
            Self::LqgSigma => "lqg-sigma",
            Self::RiccatiImplied => "riccati-implied",
        }
    }
}

impl fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CertificateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown certificate {s:?}")))
    }
}

pub fn lyapunov_identity_certificate(sys: &QBSystem) -> Result<LyapunovCertificate> {
    let n = sys.n();
    densela::solve_lyapunov(sys.a(), sys.e(), &DMatrix::identity(n, n))
}

/// `P = diag(Sigma_n)` and `Q_f = C_r` of an LQG-balanced model.
pub fn lqg_sigma_certificate(art: &RomArtifact) -> Result<LyapunovCertificate> {
    let sigma = art.sigma.as_ref().ok_or_else(|| {
        Error::InvalidCertificate(format!(
            "lqg-sigma needs an LQG-balanced model, got {}",
            art.method
        ))
    })?;
    let n = art.dim();
    let c = art
        .system
        .c()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let cert = LyapunovCertificate::from_parts(DMatrix::from_diagonal(sigma), c)?;
    Ok(cert.with_residual(art.system.a(), art.system.e()))
}

/// Certificate for a given `P` with `Q = -(A^T P E + E^T P A)`.
pub fn riccati_implied_certificate(
    sys: &QBSystem,
    p: &DMatrix<f64>,
) -> Result<LyapunovCertificate> {
    let pe = p * sys.e();
    let q = -densela::sym(&(sys.a().transpose() * &pe + pe.transpose() * sys.a()));
    let eig = q.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > hi.abs() * sys.n() as f64 * f64::EPSILON) {
        return Err(Error::InvalidCertificate(format!(
            "implied Q = -(A^T P E + E^T P A) is not positive definite (eigenvalues in [{lo:e}, {hi:e}])"
        )));
    }
    let q_f = densela::psd_factor(&q).transpose();
    let cert = LyapunovCertificate::from_parts(p.clone(), q_f)?;
    Ok(cert.with_residual(sys.a(), sys.e()))
}

/// Certificate of the requested kind for a reduced model. `lqg-sigma` and
/// `riccati-implied` use `Sigma_n` of an LQG-balanced artifact; for other
/// artifacts `riccati-implied` falls back to the identity Lyapunov solution.
pub fn certificate_for(kind: CertificateKind, art: &RomArtifact) -> Result<LyapunovCertificate> {
    match kind {
        CertificateKind::LyapunovIdentity => lyapunov_identity_certificate(&art.system),
        CertificateKind::LqgSigma => lqg_sigma_certificate(art),
        CertificateKind::RiccatiImplied => {
            let p = match &art.sigma {
                Some(s) => DMatrix::from_diagonal(s),
                None => lyapunov_identity_certificate(&art.system)?.p,
            };
            riccati_implied_certificate(&art.system, &p)
        }
    }
}

/// Full-order counterpart of `lqg-sigma`: the control Riccati solution of
/// `(E^{-1} A, E^{-1} B, C)` with `Q_f = C`, for the mass-folded system
/// (`E = I`), which is returned alongside.
pub fn lqg_fom_certificate(sys: &QBSystem) -> Result<(QBSystem, LyapunovCertificate)> {
    let folded = sys.with_mass_folded()?;
    let n = sys.n();
    let c = folded
        .c()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let ric = densela::solve_riccati_lqg(folded.a(), folded.b(), &c)?;
    let cert =
        LyapunovCertificate::from_parts(ric.control.x, c)?.with_residual(folded.a(), folded.e());
    Ok((folded, cert))
}
