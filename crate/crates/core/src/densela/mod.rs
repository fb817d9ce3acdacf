//! Dense linear-algebra kernels: factorizations, norms, real Schur forms and
//! the Lyapunov / Riccati solvers built on them.

mod lyapunov;
mod riccati;
mod schur;

pub use lyapunov::{
    lyapunov_residual, solve_continuous_lyapunov, solve_lyapunov, LyapunovCertificate,
};
pub use riccati::{care_residual, solve_care, solve_riccati_lqg, CareSolution, LqgRiccati};
pub use schur::{eigenvalues, ordered_real_schur, real_schur, schur_blocks, Eigenvalue, RealSchur};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrices with more than this many columns (in the short dimension) use the
/// Gram-matrix route for the spectral norm instead of a full SVD.
pub const FULL_SVD_LIMIT: usize = 2000;

const SVD_MAX_ITER: usize = 0;

/// Thin singular value decomposition with singular values sorted in
/// non-increasing order: `m = u * diag(s) * v_t`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(m.nrows(), 0),
            s: DVector::zeros(0),
            v_t: DMatrix::zeros(0, m.ncols()),
        });
    }
    let dec = m
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Invalid("SVD did not converge".into()))?;
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let s = DVector::from_iterator(k, order.iter().map(|&i| dec.singular_values[i]));
    let u = DMatrix::from_fn(m.nrows(), k, |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(k, m.ncols(), |r, c| v_t[(order[r], c)]);
    Ok(Svd { u, s, v_t })
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return DVector::zeros(0);
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Largest singular value. Wide or tall matrices whose short side exceeds
/// [`FULL_SVD_LIMIT`] go through the eigenvalues of the Gram matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let short = m.nrows().min(m.ncols());
    if short == 0 {
        return 0.0;
    }
    if short <= FULL_SVD_LIMIT && m.nrows().max(m.ncols()) <= 4 * FULL_SVD_LIMIT {
        // same orientation for m and m^T so both give bit-identical results
        return if m.nrows() > m.ncols() {
            singular_values(&m.transpose())[0]
        } else {
            singular_values(m)[0]
        };
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    gram_spectral_norm(&gram)
}

/// `sqrt(lambda_max(G))` for a symmetric positive semidefinite Gram matrix.
pub fn gram_spectral_norm(gram: &DMatrix<f64>) -> f64 {
    if gram.nrows() == 0 {
        return 0.0;
    }
    let eig = sym(gram).symmetric_eigenvalues();
    eig.max().max(0.0).sqrt()
}

/// Smallest singular value above `max(p, q) * sigma_max * eps`.
pub fn min_nonzero_singular_value(m: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(m);
    if s.is_empty() || s[0] == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let tau = m.nrows().max(m.ncols()) as f64 * s[0] * f64::EPSILON;
    s.iter()
        .copied()
        .filter(|&v| v > tau)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        })
        .ok_or(Error::ZeroMatrix)
}

/// Lower Cholesky factor `l` with `s = l * l^T`.
pub fn cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    sym(s)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky factorization failed".into()))
}

/// Factor `r` of a symmetric positive semidefinite matrix with `s = r * r^T`,
/// computed from the eigendecomposition. Slightly negative eigenvalues from
/// rounding are clamped to zero.
pub fn psd_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym(s).symmetric_eigen();
    let mut r = eig.eigenvectors.clone();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    r
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "lu_solve: {}x{} system with {} right-hand-side rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("LU factorization hit a zero pivot".into()))
}

/// Thin QR factorization `m = q * r`.
pub fn qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let dec = m.clone().qr();
    (dec.q(), dec.r())
}

/// Symmetric part `(m + m^T) / 2`.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Dense Kronecker product, for tests and small diagnostics only.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn kron_vec(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    DVector::from_fn(x.len() * n, |k, _| x[k / n] * y[k % n])
}
