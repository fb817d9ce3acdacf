use nalgebra::{DMatrix, DVector};

use super::{spectral_abscissa, RomArtifact, RomMethod};
use crate::densela;
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;
use crate::sim::SnapshotSet;

/// Orthonormal basis with the full singular spectrum of the snapshot matrix.
#[derive(Clone, Debug)]
pub struct PodBasis {
    pub basis: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

/// Leading `n` left singular vectors of `x`.
pub fn pod_basis(x: &DMatrix<f64>, n: usize) -> Result<PodBasis> {
    if n == 0 {
        return Err(Error::Invalid("POD order must be positive".into()));
    }
    if x.ncols() < n || x.nrows() < n {
        return Err(Error::RankDeficient(format!(
            "{}x{} snapshot matrix cannot carry {n} modes",
            x.nrows(),
            x.ncols()
        )));
    }
    let dec = densela::svd(x)?;
    let s = dec.s;
    let tol = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * s[0];
    if !(s[n - 1] > tol) {
        return Err(Error::RankDeficient(format!(
            "snapshot matrix has numerical rank below {n} (sigma_{n} = {:e}, sigma_1 = {:e})",
            s[n - 1],
            s[0]
        )));
    }
    Ok(PodBasis {
        basis: dec.u.columns(0, n).into_owned(),
        singular_values: s,
    })
}

/// Block-diagonal projector with an `n`-mode POD basis per variable.
pub fn pod_blockwise(blocks: &[SnapshotSet], n: usize) -> Result<PodBasis> {
    let rows: usize = blocks.iter().map(SnapshotSet::state_dim).sum();
    let mut basis = DMatrix::zeros(rows, n * blocks.len());
    let mut spectra = Vec::new();
    let mut offset = 0;
    for (b, block) in blocks.iter().enumerate() {
        let pod = pod_basis(&block.x, n)?;
        basis
            .view_mut((offset, b * n), (block.state_dim(), n))
            .copy_from(&pod.basis);
        offset += block.state_dim();
        spectra.extend(pod.singular_values.iter().copied());
    }
    Ok(PodBasis {
        basis,
        singular_values: DVector::from_vec(spectra),
    })
}

/// Galerkin projection onto the columns of `v` (assumed orthonormal):
/// `V^T E V`, `V^T A V`, `V^T H (V (x) V)`, `V^T N_i V`, `V^T B`, `C V`.
pub fn galerkin_reduce(sys: &QBSystem, v: &DMatrix<f64>) -> Result<QBSystem> {
    if v.nrows() != sys.n() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, system has n = {}",
            v.nrows(),
            sys.n()
        )));
    }
    let vt = v.transpose();
    let e = &vt * sys.e() * v;
    let a = &vt * sys.a() * v;
    let h = sys.h().transform(Some(&vt), v)?;
    let bilinear = sys.bilinear().iter().map(|ni| &vt * ni * v).collect();
    let b = &vt * sys.b();
    let c = sys.c().map(|c| c * v);
    QBSystem::new(e, a, h, bilinear, b, c)
}

/// POD-Galerkin reduced model with `n` modes per snapshot block (a single
/// block gives plain POD).
pub fn pod_galerkin(sys: &QBSystem, blocks: &[SnapshotSet], n: usize) -> Result<RomArtifact> {
    if blocks.is_empty() {
        return Err(Error::Invalid("POD needs at least one snapshot block".into()));
    }
    let rows: usize = blocks.iter().map(SnapshotSet::state_dim).sum();
    let mut basis = DMatrix::zeros(rows, n * blocks.len());
    let mut singular_values = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for (b, block) in blocks.iter().enumerate() {
        let pod = pod_basis(&block.x, n)?;
        basis
            .view_mut((offset, b * n), (block.state_dim(), n))
            .copy_from(&pod.basis);
        offset += block.state_dim();
        singular_values.push(pod.singular_values);
    }
    let system = galerkin_reduce(sys, &basis)?;
    let max_real_eig = spectral_abscissa(&system)?;
    Ok(RomArtifact {
        method: RomMethod::Pod,
        system,
        left: basis.transpose(),
        right: basis,
        singular_values,
        sigma: None,
        riccati_residuals: None,
        max_real_eig,
    })
}
