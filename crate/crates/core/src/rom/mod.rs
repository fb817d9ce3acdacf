//! Reduction pipelines: LQG balanced truncation, POD-Galerkin and operator
//! inference, plus the Lyapunov certificates used with the reduced models.

mod certificates;
mod data;
mod lqgbt;
mod opinf;
mod pod;

#[cfg(test)]
mod tests;

pub use certificates::{
    certificate_for, lqg_fom_certificate, lqg_sigma_certificate, lyapunov_identity_certificate,
    riccati_implied_certificate, CertificateKind,
};
pub use data::{
    burgers_fd_training_data, fhn_snapshots, BurgersFdData, FhnSnapshotPlan, RandomInputPlan,
};
pub use lqgbt::{lqg_balanced_truncation, reduced_riccati_residuals};
pub use opinf::{
    operator_inference, quadratic_regressors, reconstruction_error, DerivativeScheme, OpInfOptions,
};
pub use pod::{galerkin_reduce, pod_basis, pod_blockwise, pod_galerkin, PodBasis};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{MatrixData, ModelFile};
use crate::qbsys::QBSystem;

/// Relative singular-value threshold used to suggest a truncation order.
pub const SUGGEST_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RomMethod {
    Lqgbt,
    Pod,
    Opinf,
}

impl std::fmt::Display for RomMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lqgbt => "lqgbt",
            Self::Pod => "pod",
            Self::Opinf => "opinf",
        })
    }
}

/// A reduced model with its projectors: `x_full ~ right * x_red` and
/// `x_red = left * x_full`.
#[derive(Clone, Debug)]
pub struct RomArtifact {
    pub method: RomMethod,
    pub system: QBSystem,
    pub right: DMatrix<f64>,
    pub left: DMatrix<f64>,
    /// Singular values behind the truncation, one vector per block (a single
    /// block except for blockwise POD).
    pub singular_values: Vec<DVector<f64>>,
    /// Balanced Gramian `Sigma_n` (LQG-BT only).
    pub sigma: Option<DVector<f64>>,
    /// Relative residuals of the two reduced Riccati identities (LQG-BT only).
    pub riccati_residuals: Option<(f64, f64)>,
    /// Largest real part of the spectrum of `E^{-1} A` of the reduced model.
    pub max_real_eig: f64,
}

impl RomArtifact {
    pub fn dim(&self) -> usize {
        self.system.n()
    }

    pub fn linear_part_unstable(&self) -> bool {
        self.max_real_eig >= 0.0
    }

    pub fn to_file(&self) -> RomFile {
        RomFile {
            method: self.method,
            system: ModelFile::from_system(&self.system),
            right: MatrixData::from_matrix(&self.right),
            left: MatrixData::from_matrix(&self.left),
            singular_values: self
                .singular_values
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            sigma: self.sigma.as_ref().map(|s| s.iter().copied().collect()),
            riccati_residuals: self.riccati_residuals,
            max_real_eig: self.max_real_eig,
        }
    }

    pub fn from_file(file: &RomFile) -> Result<Self> {
        Ok(Self {
            method: file.method,
            system: file.system.to_system()?,
            right: file.right.to_matrix()?,
            left: file.left.to_matrix()?,
            singular_values: file
                .singular_values
                .iter()
                .map(|s| DVector::from_vec(s.clone()))
                .collect(),
            sigma: file.sigma.as_ref().map(|s| DVector::from_vec(s.clone())),
            riccati_residuals: file.riccati_residuals,
            max_real_eig: file.max_real_eig,
        })
    }
}

/// Serialized [`RomArtifact`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RomFile {
    pub method: RomMethod,
    pub system: ModelFile,
    pub right: MatrixData,
    pub left: MatrixData,
    pub singular_values: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub riccati_residuals: Option<(f64, f64)>,
    pub max_real_eig: f64,
}

/// Number of singular values above `threshold * s[0]`.
pub fn suggest_order(s: &DVector<f64>, threshold: f64) -> usize {
    match s.iter().next() {
        Some(&s0) if s0 > 0.0 => s.iter().take_while(|&&v| v > threshold * s0).count(),
        _ => 0,
    }
}

/// Largest real part of the eigenvalues of `E^{-1} A`.
pub fn spectral_abscissa(sys: &QBSystem) -> Result<f64> {
    let a = sys.linear_part()?;
    Ok(crate::densela::eigenvalues(&a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}
