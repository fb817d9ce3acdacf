//! Stability-radius estimates for the autonomous part `E x' = A x + H (x (x) x)`
//! with the quadratic Lyapunov function `v(x) = x^T E^T P E x`.

mod optimize;

pub use optimize::{optimize_radius, OptimizeOptions, RestartSummary, StabilityEstimate};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::densela::{self, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;

/// Number of free skew-symmetric parameters, `n^2 (n - 1) / 2`.
pub fn parameter_count(n: usize) -> usize {
    n * n * n.saturating_sub(1) / 2
}

/// Index map between `mu` and the perturbations `S_1, ..., S_n` of the slices.
///
/// Component `k = r * n(n-1)/2 + pair(p, q)` (with `p < q`, pairs in
/// row-major order) adds `+1` at `S_p[r, q]` and `-1` at `S_q[r, p]`. For every
/// row `r` the array `(i, j) -> S_i[r, j]` is skew-symmetric, which is exactly
/// the condition for `sum_i x_i S_i x = 0` for all `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MuParametrization {
    n: usize,
}

impl MuParametrization {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        parameter_count(self.n)
    }

    fn pairs(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn index(&self, r: usize, p: usize, q: usize) -> usize {
        assert!(
            r < self.n && p < q && q < self.n,
            "invalid generator ({r}, {p}, {q})"
        );
        // pairs before row p: sum_{s < p} (n - 1 - s)
        let before = p * (2 * self.n - p - 1) / 2;
        r * self.pairs() + before + (q - p - 1)
    }

    /// Inverse of [`Self::index`]: `(r, p, q)`.
    pub fn triple(&self, k: usize) -> (usize, usize, usize) {
        assert!(k < self.dim(), "parameter index {k} out of range");
        let r = k / self.pairs();
        let mut rem = k % self.pairs();
        let mut p = 0;
        while rem >= self.n - 1 - p {
            rem -= self.n - 1 - p;
            p += 1;
        }
        (r, p, p + 1 + rem)
    }

    /// `(r, p, q)` for every component, in index order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |r| (0..n).flat_map(move |p| ((p + 1)..n).map(move |q| (r, p, q))))
    }

    pub fn skew_matrices(&self, mu: &DVector<f64>) -> Vec<DMatrix<f64>> {
        assert_eq!(mu.len(), self.dim(), "mu has wrong length");
        let mut s = vec![DMatrix::zeros(self.n, self.n); self.n];
        for (k, (r, p, q)) in self.triples().enumerate() {
            s[p][(r, q)] += mu[k];
            s[q][(r, p)] -= mu[k];
        }
        s
    }
}

/// Norms entering the closed-form radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticDiagnostics {
    #[serde(with = "crate::io::nonfinite")]
    pub rho: f64,
    pub sigma_min_qf: f64,
    pub norm_h: f64,
    pub norm_p: f64,
    pub norm_e: f64,
    /// Radius in `||x||_2` of the ball on which the cubic bound gives `v' < 0`.
    #[serde(with = "crate::io::nonfinite")]
    pub ball_radius: f64,
    /// Largest level `rho` with `{v(x) < rho^2}` inside that ball:
    /// `ball_radius * sqrt(lambda_min(E^T P E))`.
    #[serde(with = "crate::io::nonfinite")]
    pub rho_rigorous: f64,
}

fn check_certificate(sys: &QBSystem, cert: &LyapunovCertificate) -> Result<()> {
    let n = sys.n();
    if cert.p.shape() != (n, n) || cert.p_f.shape() != (n, n) || cert.q_f.ncols() != n {
        return Err(Error::InvalidCertificate(format!(
            "certificate dimensions P {:?}, Q_f {:?} do not match n = {n}",
            cert.p.shape(),
            cert.q_f.shape()
        )));
    }
    if cert.p.iter().chain(cert.q_f.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidCertificate("non-finite entries".into()));
    }
    Ok(())
}

/// `sigma_min(Q_f)^2 / (2 ||H||_2 sqrt(||P||_2))`, infinite for `H = 0`.
pub fn analytic_radius(sys: &QBSystem, cert: &LyapunovCertificate) -> Result<f64> {
    Ok(analytic_diagnostics(sys, cert)?.rho)
}

pub fn analytic_diagnostics(
    sys: &QBSystem,
    cert: &LyapunovCertificate,
) -> Result<AnalyticDiagnostics> {
    check_certificate(sys, cert)?;
    let sigma = densela::min_nonzero_singular_value(&cert.q_f)
        .map_err(|_| Error::InvalidCertificate("Q_f is numerically zero".into()))?;
    let norm_h = sys.h().spectral_norm();
    let norm_p = densela::spectral_norm(&cert.p);
    let norm_e = densela::spectral_norm(sys.e());
    let (rho, ball_radius, rho_rigorous) = if norm_h == 0.0 {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        let s2 = sigma * sigma;
        let ball = s2 / (2.0 * norm_e * norm_p * norm_h);
        let pe = &cert.p * sys.e();
        let lmin = densela::sym(&(sys.e().transpose() * pe))
            .symmetric_eigenvalues()
            .min()
            .max(0.0);
        (
            s2 / (2.0 * norm_h * norm_p.sqrt()),
            ball,
            ball * lmin.sqrt(),
        )
    };
    Ok(AnalyticDiagnostics {
        rho,
        sigma_min_qf: sigma,
        norm_h,
        norm_p,
        norm_e,
        ball_radius,
        rho_rigorous,
    })
}

/// Precomputed data for evaluating `G(mu)`, `J(mu)` and `alpha(mu)`.
///
/// `Q_f` enters through a factor `W` (r x n) with `W^T W = Q`: `Q_f` itself
/// when square and invertible, otherwise the thin-SVD factor `S_r V_r^T` with
/// pseudo-inverse `V_r S_r^{-1}`. The level-set factor is `P_f E`, so
/// `v(x) = ||P_f E x||^2`.
#[derive(Clone, Debug)]
pub struct RadiusProblem {
    n: usize,
    param: MuParametrization,
    k: Vec<DMatrix<f64>>,
    p: DMatrix<f64>,
    pe: DMatrix<f64>,
    level: DMatrix<f64>,
    pi: DMatrix<f64>,
    w: DMatrix<f64>,
    w_pinv: DMatrix<f64>,
    a: DMatrix<f64>,
    qf_factored: bool,
}

impl RadiusProblem {
    pub fn new(sys: &QBSystem, cert: &LyapunovCertificate) -> Result<Self> {
        check_certificate(sys, cert)?;
        let n = sys.n();
        let pe = &cert.p * sys.e();
        let level = &cert.p_f * sys.e();
        let pi = densela::lu_solve(&level.transpose(), &DMatrix::identity(n, n))
            .map_err(|_| Error::InvalidCertificate("P_f E is singular".into()))?;
        let (w, w_pinv, qf_factored) = qf_factor(&cert.q_f)?;
        Ok(Self {
            n,
            param: MuParametrization::new(n),
            k: sys.h().slices(),
            p: cert.p.clone(),
            pe,
            level,
            pi,
            w,
            w_pinv,
            a: sys.a().clone(),
            qf_factored,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn parametrization(&self) -> MuParametrization {
        self.param
    }

    /// Row count `r` of the factor `W`.
    pub fn factor_rank(&self) -> usize {
        self.w.nrows()
    }

    /// True when `Q_f` was replaced by its thin-SVD factor (rectangular or
    /// singular `Q_f`).
    pub fn qf_factored(&self) -> bool {
        self.qf_factored
    }

    /// `v(x) = x^T E^T P E x`.
    pub fn v(&self, x: &DVector<f64>) -> f64 {
        (&self.level * x).norm_squared()
    }

    pub fn level_factor(&self) -> &DMatrix<f64> {
        &self.level
    }

    fn g_blocks(&self, mu: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let s = self.param.skew_matrices(mu);
        self.k
            .iter()
            .zip(s)
            .map(|(k, s)| {
                let m = k + s;
                let x = m.transpose() * &self.pe;
                &x + x.transpose()
            })
            .collect()
    }

    /// `G(mu)` with row blocks `G_i = M_i^T P E + E^T P M_i`, `M_i = K_i + S_i`.
    pub fn build_g(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut g = DMatrix::zeros(n * n, n);
        for (i, gi) in self.g_blocks(mu).iter().enumerate() {
            g.view_mut((i * n, 0), (n, n)).copy_from(gi);
        }
        g
    }

    /// `J(mu)` with row blocks `J_k = sum_i Pi[k, i] W^{+T} G_i W^+`,
    /// `Pi = (P_f E)^{-T}`.
    pub fn build_j(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let r = self.w.nrows();
        let hats: Vec<DMatrix<f64>> = self
            .g_blocks(mu)
            .iter()
            .map(|g| self.w_pinv.transpose() * g * &self.w_pinv)
            .collect();
        let mut j = DMatrix::zeros(n * r, r);
        for k in 0..n {
            let mut block = j.view_mut((k * r, 0), (r, r));
            for (i, h) in hats.iter().enumerate() {
                let c = self.pi[(k, i)];
                if c != 0.0 {
                    block += h * c;
                }
            }
        }
        j
    }

    /// `v'(x) = 2 (E x)^T P (A x + H (x (x) x))`, computed from the slices.
    pub fn vdot(&self, x: &DVector<f64>) -> f64 {
        let mut f = &self.a * x;
        for (i, k) in self.k.iter().enumerate() {
            if x[i] != 0.0 {
                f += k * x * x[i];
            }
        }
        2.0 * (&self.pe * x).dot(&f)
    }

    /// `v'(x) = y^T [-I + (w^T (x) I) J(mu)] y` with `y = W x`, `w = P_f E x`.
    pub fn vdot_via_j(&self, mu: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let r = self.w.nrows();
        let y = &self.w * x;
        let w = &self.level * x;
        let j = self.build_j(mu);
        let mut m = DMatrix::zeros(r, r);
        for k in 0..self.n {
            m += j.view((k * r, 0), (r, r)) * w[k];
        }
        -y.norm_squared() + y.dot(&(m * &y))
    }

    /// `alpha(mu) = ||J(mu)||_2` and a subgradient.
    pub fn objective(&self, mu: &DVector<f64>) -> (f64, DVector<f64>) {
        let dim = self.param.dim();
        let j = self.build_j(mu);
        if j.iter().all(|&v| v == 0.0) {
            return (0.0, DVector::zeros(dim));
        }
        let svd = j.svd(true, true);
        let (top, &alpha) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let mut grad = DVector::zeros(dim);
        if dim > 0 {
            let u = svd.u.as_ref().expect("u").column(top).into_owned();
            let v = svd.v_t.as_ref().expect("v_t").row(top).transpose();
            self.add_pair_gradient(&u, &v, 1.0, &mut grad);
        }
        (alpha, grad)
    }

    /// Log-sum-exp smoothing `f = alpha + log(sum_i exp(beta (sigma_i - alpha))) / beta`
    /// of the largest singular value, its gradient, and `alpha` itself.
    /// `alpha <= f <= alpha + log(r) / beta`; `f` is convex in `mu`.
    pub fn smoothed_objective(&self, mu: &DVector<f64>, beta: f64) -> (f64, DVector<f64>, f64) {
        let dim = self.param.dim();
        let j = self.build_j(mu);
        if j.iter().all(|&v| v == 0.0) {
            return (0.0, DVector::zeros(dim), 0.0);
        }
        let svd = j.svd(true, true);
        let s = &svd.singular_values;
        let alpha = s.max();
        let weights: Vec<f64> = s.iter().map(|&si| (beta * (si - alpha)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let f = alpha + total.ln() / beta;
        let mut grad = DVector::zeros(dim);
        if dim > 0 {
            let u = svd.u.as_ref().expect("u");
            let v_t = svd.v_t.as_ref().expect("v_t");
            for (i, w) in weights.iter().enumerate() {
                let w = w / total;
                if w > 1e-14 {
                    let ui = u.column(i).into_owned();
                    let vi = v_t.row(i).transpose();
                    self.add_pair_gradient(&ui, &vi, w, &mut grad);
                }
            }
        }
        (f, grad, alpha)
    }

    /// `grad_k += weight * u^T (dJ / dmu_k) v`.
    fn add_pair_gradient(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        weight: f64,
        grad: &mut DVector<f64>,
    ) {
        let n = self.n;
        let r = self.w.nrows();
        let b = &self.w_pinv * v;
        let c = &self.pe * &b;
        // columns a_i = W^+ u_tilde_i with u_tilde_i = sum_k Pi[k, i] u_k
        let mut ut = DMatrix::zeros(r, n);
        for k in 0..n {
            let uk = u.rows(k * r, r);
            for i in 0..n {
                let coef = self.pi[(k, i)];
                if coef != 0.0 {
                    ut.column_mut(i).axpy(coef, &uk, 1.0);
                }
            }
        }
        let a = &self.w_pinv * ut;
        let d = &self.pe * &a;
        for (idx, (row, p, q)) in self.param.triples().enumerate() {
            grad[idx] += weight
                * (c[row] * (a[(q, p)] - a[(p, q)]) + d[(row, p)] * b[q] - d[(row, q)] * b[p]);
        }
    }

    pub fn alpha(&self, mu: &DVector<f64>) -> f64 {
        densela::spectral_norm(&self.build_j(mu))
    }

    /// The Lyapunov matrix of the certificate.
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
}

fn qf_factor(q_f: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, bool)> {
    let n = q_f.ncols();
    if q_f.nrows() == n {
        let lu = q_f.clone().lu();
        let diag = lu.u().diagonal().map(f64::abs);
        if n > 0 && diag.min() > 1e3 * n as f64 * f64::EPSILON * diag.max() {
            if let Some(inv) = lu.try_inverse() {
                return Ok((q_f.clone(), inv, false));
            }
        }
    }
    let svd = densela::svd(q_f)?;
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let tol = q_f.nrows().max(n) as f64 * smax * f64::EPSILON;
    let r = svd.s.iter().filter(|&&s| s > tol).count();
    if r == 0 {
        return Err(Error::InvalidCertificate("Q_f is numerically zero".into()));
    }
    let s_r = DVector::from_iterator(r, svd.s.iter().take(r).copied());
    let v_r = svd.v_t.rows(0, r).transpose();
    let mut w = v_r.transpose();
    for (k, mut row) in w.row_iter_mut().enumerate() {
        row *= s_r[k];
    }
    let mut w_pinv = v_r;
    for (k, mut col) in w_pinv.column_iter_mut().enumerate() {
        col /= s_r[k];
    }
    Ok((w, w_pinv, true))
}

#[cfg(test)]
mod tests;
