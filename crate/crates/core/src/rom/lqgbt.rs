use nalgebra::{DMatrix, DVector};

use super::{spectral_abscissa, RomArtifact, RomMethod};
use crate::densela::{self, care_residual};
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;

/// LQG balanced truncation to order `n`.
///
/// The Riccati pair is solved for `(E^{-1} A, E^{-1} B, C)` (with `C = I`
/// when the system has no output), the Gramians are factored as
/// `P = R R^T`, `Q = L L^T`, and `L^T R = U Sigma V^T` gives
/// `T = R V_n Sigma_n^{-1/2}`, `T^+ = Sigma_n^{-1/2} U_n^T L^T`. The reduced
/// system has `E = I`.
pub fn lqg_balanced_truncation(sys: &QBSystem, n: usize) -> Result<RomArtifact> {
    let full = sys.n();
    if n == 0 || n > full {
        return Err(Error::Invalid(format!(
            "reduced order {n} outside 1..={full}"
        )));
    }
    let a = sys.linear_part()?;
    let b = sys.solve_mass_matrix(sys.b())?;
    let c = sys
        .c()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(full, full));
    let ric = densela::solve_riccati_lqg(&a, &b, &c)?;
    let r = densela::psd_factor(&ric.filter.x);
    let l = densela::psd_factor(&ric.control.x);
    let dec = densela::svd(&(l.transpose() * &r))?;
    let s = dec.s.clone();
    let tol = full as f64 * f64::EPSILON * s[0].max(f64::MIN_POSITIVE);
    if s[n - 1] <= tol {
        return Err(Error::RankDeficient(format!(
            "order {n} exceeds the numerical rank of L^T R (sigma_{n} = {:e}, sigma_1 = {:e})",
            s[n - 1],
            s[0]
        )));
    }
    let sigma = s.rows(0, n).into_owned();
    let scale = sigma.map(|v| 1.0 / v.sqrt());
    let v_n = dec.v_t.rows(0, n).transpose();
    let right = &r * v_n * DMatrix::from_diagonal(&scale);
    let left = DMatrix::from_diagonal(&scale) * dec.u.columns(0, n).transpose() * l.transpose();

    // T^+ E^{-1}, applied to the raw H and N_i
    let left_e = if sys.e_is_identity() {
        left.clone()
    } else {
        densela::lu_solve(&sys.e().transpose(), &left.transpose())?.transpose()
    };
    let ar = &left * &a * &right;
    let br = &left * &b;
    let cr = &c * &right;
    let hr = sys.h().transform(Some(&left_e), &right)?;
    let nr = sys
        .bilinear()
        .iter()
        .map(|ni| &left_e * ni * &right)
        .collect();
    let reduced = QBSystem::new(DMatrix::identity(n, n), ar, hr, nr, br, Some(cr))?;
    let residuals = reduced_riccati_residuals(&reduced, &sigma)?;
    let max_real_eig = spectral_abscissa(&reduced)?;
    Ok(RomArtifact {
        method: RomMethod::Lqgbt,
        system: reduced,
        right,
        left,
        singular_values: vec![s],
        sigma: Some(sigma),
        riccati_residuals: Some(residuals),
        max_real_eig,
    })
}

/// Relative residuals of
/// `A S + S A^T - S C^T C S + B B^T = 0` and
/// `A^T S + S A - S B B^T S + C^T C = 0` for diagonal `S`.
pub fn reduced_riccati_residuals(sys: &QBSystem, sigma: &DVector<f64>) -> Result<(f64, f64)> {
    let n = sys.n();
    if sigma.len() != n {
        return Err(Error::Dimension(format!(
            "{} Gramian entries for order {n}",
            sigma.len()
        )));
    }
    let a = sys.linear_part()?;
    let b = sys.solve_mass_matrix(sys.b())?;
    let c = sys.c().cloned().unwrap_or_else(|| DMatrix::identity(n, n));
    let s = DMatrix::from_diagonal(sigma);
    let filter = care_residual(
        &a.transpose(),
        &(c.transpose() * &c),
        &(&b * b.transpose()),
        &s,
    );
    let control = care_residual(&a, &(&b * b.transpose()), &(c.transpose() * &c), &s);
    Ok((filter, control))
}
