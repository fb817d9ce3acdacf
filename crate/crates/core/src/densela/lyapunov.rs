use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::schur::{real_schur, schur_blocks, RealSchur};
use super::{cholesky, sym};
use crate::error::{Error, Result};

/// Quadratic Lyapunov data `v(x) = x^T E^T P E x` with `P = P_f^T P_f` and
/// `Q = Q_f^T Q_f`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub p: DMatrix<f64>,
    /// Upper factor with `p = p_f^T p_f`.
    pub p_f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    /// Relative residual `||A^T P E + E^T P A + Q||_F / ||Q||_F` of the
    /// system the certificate was built for.
    #[serde(with = "crate::io::nonfinite")]
    pub residual: f64,
}

impl LyapunovCertificate {
    /// Assemble a certificate from a given Lyapunov matrix and right-hand-side
    /// factor. The residual is left at NaN until [`Self::with_residual`].
    pub fn from_parts(p: DMatrix<f64>, q_f: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || q_f.ncols() != p.nrows() {
            return Err(Error::Dimension(format!(
                "certificate: P is {}x{}, Q_f is {}x{}",
                p.nrows(),
                p.ncols(),
                q_f.nrows(),
                q_f.ncols()
            )));
        }
        let p = sym(&p);
        let p_f = cholesky(&p)?.transpose();
        let q = q_f.transpose() * &q_f;
        Ok(Self {
            p,
            p_f,
            q,
            q_f,
            residual: f64::NAN,
        })
    }

    pub fn with_residual(mut self, a: &DMatrix<f64>, e: &DMatrix<f64>) -> Self {
        self.residual = lyapunov_residual(a, e, &self.p, &self.q);
        self
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// `||A^T P E + E^T P A + Q||_F / ||Q||_F`.
pub fn lyapunov_residual(
    a: &DMatrix<f64>,
    e: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> f64 {
    let pe = p * e;
    let r = a.transpose() * &pe + pe.transpose() * a + q;
    let scale = q.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

/// Solve `a^T x + x a = c` by Bartels-Stewart on the real Schur form of `a`.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = real_schur(a)?;
    solve_with_schur(&schur, c)
}

fn solve_with_schur(schur: &RealSchur, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = schur.t.nrows();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyapunov right-hand side must be {n}x{n}"
        )));
    }
    let u = &schur.q;
    let ct = u.transpose() * c * u;
    let y = solve_quasi_triangular(&schur.t, &ct)?;
    Ok(sym(&(u * y * u.transpose())))
}

/// Solve `t^T y + y t = c` for quasi-upper-triangular `t`, block by block.
fn solve_quasi_triangular(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = schur_blocks(t);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(rk, p) in &blocks {
        for &(cl, q) in &blocks {
            let mut rhs = c.view((rk, cl), (p, q)).into_owned();
            if rk > 0 {
                // sum over i < k of T_ik^T Y_il
                rhs -= t.view((0, rk), (rk, p)).transpose() * y.view((0, cl), (rk, q));
            }
            if cl > 0 {
                // sum over j < l of Y_kj T_jl
                rhs -= y.view((rk, 0), (p, cl)) * t.view((0, cl), (cl, q));
            }
            let tkk = t.view((rk, rk), (p, p));
            let tll = t.view((cl, cl), (q, q));
            // (I_q (x) T_kk^T + T_ll^T (x) I_p) vec(Y) = vec(rhs)
            let mut kmat = DMatrix::zeros(p * q, p * q);
            for j in 0..q {
                for i in 0..p {
                    let row = j * p + i;
                    for ii in 0..p {
                        kmat[(row, j * p + ii)] += tkk[(ii, i)];
                    }
                    for jj in 0..q {
                        kmat[(row, jj * p + i)] += tll[(jj, j)];
                    }
                }
            }
            let b = DVector::from_iterator(p * q, rhs.iter().copied());
            let sol = kmat.lu().solve(&b).ok_or_else(|| {
                Error::Singular(format!(
                    "lyapunov block ({rk},{cl}): eigenvalues sum to zero"
                ))
            })?;
            for j in 0..q {
                for i in 0..p {
                    y[(rk + i, cl + j)] = sol[j * p + i];
                }
            }
        }
    }
    Ok(y)
}

/// Solve `A^T P E + E^T P A + Q_f^T Q_f = 0` for `P`.
///
/// The equation is mapped to `At^T X + X At = -Q` with `At = E^{-1} A` and
/// `X = E^T P E`, solved on the real Schur form of `At`, and mapped back.
/// Fails with [`Error::UnstableLinearPart`] when some eigenvalue of `At` has
/// real part above `-1e-12 * ||At||_F`.
pub fn solve_lyapunov(
    a: &DMatrix<f64>,
    e: &DMatrix<f64>,
    q_f: &DMatrix<f64>,
) -> Result<LyapunovCertificate> {
    let n = a.nrows();
    if !a.is_square() || e.shape() != (n, n) || q_f.ncols() != n {
        return Err(Error::Dimension(format!(
            "solve_lyapunov: A {}x{}, E {}x{}, Q_f {}x{}",
            a.nrows(),
            a.ncols(),
            e.nrows(),
            e.ncols(),
            q_f.nrows(),
            q_f.ncols()
        )));
    }
    let e_lu = e.clone().lu();
    let a_tilde = e_lu
        .solve(a)
        .ok_or_else(|| Error::Singular("mass matrix E in lyapunov solve".into()))?;
    let schur = real_schur(&a_tilde)?;
    let eps_stab = 1e-12 * a_tilde.norm();
    let max_real = schur
        .eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real >= -eps_stab {
        return Err(Error::UnstableLinearPart { max_real });
    }
    let q = q_f.transpose() * q_f;
    let x = solve_with_schur(&schur, &(-&q))?;
    // P = E^{-T} X E^{-1}
    let e_t_lu = e.transpose().lu();
    let y = e_t_lu
        .solve(&x)
        .ok_or_else(|| Error::Singular("mass matrix E in lyapunov solve".into()))?;
    let p_t = e_t_lu
        .solve(&y.transpose())
        .ok_or_else(|| Error::Singular("mass matrix E in lyapunov solve".into()))?;
    let p = sym(&p_t);
    let p_f = cholesky(&p)
        .map_err(|_| {
            Error::NotPositiveDefinite("Lyapunov matrix P is not positive definite".into())
        })?
        .transpose();
    let residual = lyapunov_residual(a, e, &p, &q);
    Ok(LyapunovCertificate {
        p,
        p_f,
        q,
        q_f: q_f.clone(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_case() {
        let n = 4;
        let id = DMatrix::identity(n, n);
        let cert = solve_lyapunov(&(-&id), &id, &id).unwrap();
        assert!((cert.p - &id * 0.5).norm() < 1e-14);
    }

    #[test]
    fn scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let cert =
            solve_lyapunov(&(-&one), &one, &DMatrix::from_element(1, 1, 2f64.sqrt())).unwrap();
        assert!((cert.p[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((cert.p_f[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_stable_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let n = 30;
        let a = random(&mut rng, n, n) - DMatrix::identity(n, n) * 10.0;
        let cert = solve_lyapunov(&a, &DMatrix::identity(n, n), &DMatrix::identity(n, n)).unwrap();
        assert!(cert.residual <= 1e-10, "residual {}", cert.residual);
        assert!((&cert.p - cert.p.transpose()).norm() <= 1e-12 * cert.p.norm());
        assert!(cert.p.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn generalized_with_mass_and_rectangular_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 12;
        let g = random(&mut rng, n, n);
        let e = &g * g.transpose() + DMatrix::identity(n, n) * n as f64;
        let a = random(&mut rng, n, n) - DMatrix::identity(n, n) * 8.0;
        let q_f = random(&mut rng, n + 3, n);
        let cert = solve_lyapunov(&a, &e, &q_f).unwrap();
        assert!(cert.residual <= 1e-10, "residual {}", cert.residual);
    }

    #[test]
    fn unstable_is_reported() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1e-3]));
        let id = DMatrix::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&a, &id, &id),
            Err(Error::UnstableLinearPart { .. })
        ));
        let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0]));
        assert!(matches!(
            solve_lyapunov(&singular, &id, &id),
            Err(Error::UnstableLinearPart { .. })
        ));
    }

    #[test]
    fn plain_lyapunov_with_complex_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 25;
        let a = random(&mut rng, n, n) * 3.0 - DMatrix::identity(n, n) * 8.0;
        let c = random(&mut rng, n, n);
        let c = &c + c.transpose();
        let x = solve_continuous_lyapunov(&a, &c).unwrap();
        let r = a.transpose() * &x + &x * &a - &c;
        assert!(r.norm() <= 1e-12 * c.norm() * 10.0);
    }
}
