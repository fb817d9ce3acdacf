use nalgebra::DMatrix;

use super::lyapunov::solve_continuous_lyapunov;
use super::schur::ordered_real_schur;
use super::sym;
use crate::error::{Error, Result};

/// Stabilizing solution of `F^T X + X F - X G X + W = 0`.
#[derive(Clone, Debug)]
pub struct CareSolution {
    pub x: DMatrix<f64>,
    pub residual: f64,
    /// Newton-Kleinman passes that were accepted after the Schur solve.
    pub refinements: usize,
}

/// Both LQG Riccati solutions of a triple `(A, B, C)`.
#[derive(Clone, Debug)]
pub struct LqgRiccati {
    /// `A P + P A^T - P C^T C P + B B^T = 0`
    pub filter: CareSolution,
    /// `A^T Q + Q A - Q B B^T Q + C^T C = 0`
    pub control: CareSolution,
}

/// Relative residual of `F^T X + X F - X G X + W`, normalized by the sum of
/// the term norms.
pub fn care_residual(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> f64 {
    let ftx = f.transpose() * x;
    let xgx = x * g * x;
    let r = &ftx + ftx.transpose() - &xgx + w;
    let scale = 2.0 * ftx.norm() + xgx.norm() + w.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

/// Solve the continuous algebraic Riccati equation through the stable
/// invariant subspace of the Hamiltonian `[[F, -G], [-W, -F^T]]`, followed by
/// at most two Newton-Kleinman refinement passes (kept only when they lower
/// the residual).
pub fn solve_care(f: &DMatrix<f64>, g: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<CareSolution> {
    let n = f.nrows();
    if !f.is_square() || g.shape() != (n, n) || w.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "solve_care: F {:?}, G {:?}, W {:?}",
            f.shape(),
            g.shape(),
            w.shape()
        )));
    }
    if n == 0 {
        return Ok(CareSolution {
            x: DMatrix::zeros(0, 0),
            residual: 0.0,
            refinements: 0,
        });
    }
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(f);
    ham.view_mut((0, n), (n, n)).copy_from(&(-g));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-w));
    ham.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));

    let (schur, k) = ordered_real_schur(&ham, |e| e.re < 0.0)?;
    if k != n {
        return Err(Error::Riccati(format!(
            "Hamiltonian has {k} stable eigenvalues, expected {n} (eigenvalues on the imaginary axis?)"
        )));
    }
    let u1 = schur.q.view((0, 0), (n, n)).into_owned();
    let u2 = schur.q.view((n, 0), (n, n)).into_owned();
    // X U1 = U2  <=>  U1^T X^T = U2^T
    let xt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| Error::Riccati("stable subspace basis U1 is singular".into()))?;
    let mut x = sym(&xt.transpose());
    let mut residual = care_residual(f, g, w, &x);

    let mut refinements = 0;
    for _ in 0..2 {
        let closed = f - g * &x;
        let rhs = -(w + &x * g * &x);
        let Ok(next) = solve_continuous_lyapunov(&closed, &rhs) else {
            break;
        };
        let next_res = care_residual(f, g, w, &next);
        if next_res < residual {
            x = next;
            residual = next_res;
            refinements += 1;
        } else {
            break;
        }
    }

    let min_eig = x.symmetric_eigenvalues().min();
    if min_eig < -1e-8 * x.norm().max(1.0) {
        return Err(Error::Riccati(format!(
            "solution is indefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(CareSolution {
        x,
        residual,
        refinements,
    })
}

/// LQG Riccati pair for `(A, B, C)`.
pub fn solve_riccati_lqg(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<LqgRiccati> {
    let n = a.nrows();
    if b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "solve_riccati_lqg: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let bbt = b * b.transpose();
    let ctc = c.transpose() * c;
    let filter = solve_care(&a.transpose(), &ctc, &bbt)?;
    let control = solve_care(a, &bbt, &ctc)?;
    Ok(LqgRiccati { filter, control })
}
