use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{spectral_abscissa, RomArtifact, RomMethod};
use crate::densela;
use crate::error::{Error, Result};
use crate::qbsys::{QBSystem, QuadraticOperator};
use crate::sim::{estimate_derivatives, integrate, IntegrateOptions, SnapshotSet, TerminalStatus};

/// How time derivatives are obtained when the snapshots carry none.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Divided differences `(x_{k+1} - x_k) / (t_{k+1} - t_k)` regressed
    /// against the interval averages of state and input. Second order, and
    /// insensitive to inputs that change slope at every sample.
    #[default]
    Midpoint,
    /// Fourth-order finite differences at the snapshot times.
    FourthOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpInfOptions {
    /// Ridge weight on all operator entries.
    pub reg: f64,
    pub derivatives: DerivativeScheme,
}

impl Default for OpInfOptions {
    fn default() -> Self {
        Self {
            reg: 0.0,
            derivatives: DerivativeScheme::Midpoint,
        }
    }
}

/// Projected states, inputs and derivatives used as regression data.
fn regression_data(
    snap: &SnapshotSet,
    vt: &DMatrix<f64>,
    scheme: DerivativeScheme,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let k = snap.len();
    let x = vt * &snap.x;
    let u = snap.u.clone().unwrap_or_else(|| DMatrix::zeros(0, k));
    if let Some(d) = &snap.xdot {
        return Ok((x, vt * d, u));
    }
    match scheme {
        DerivativeScheme::FourthOrder => {
            let reduced =
                estimate_derivatives(&SnapshotSet::new(snap.t.clone(), x.clone(), None)?)?;
            let xdot = reduced.xdot.expect("derivatives were just estimated");
            Ok((x, xdot, u))
        }
        DerivativeScheme::Midpoint => {
            if k < 2 {
                return Err(Error::RankDeficient(format!(
                    "{k} snapshots give no differences"
                )));
            }
            let (lo, hi) = (x.columns(0, k - 1), x.columns(1, k - 1));
            let mut xdot = &hi - &lo;
            for (c, mut col) in xdot.column_iter_mut().enumerate() {
                col /= snap.t[c + 1] - snap.t[c];
            }
            let mid = (lo + hi) * 0.5;
            let umid = (u.columns(0, k - 1) + u.columns(1, k - 1)) * 0.5;
            Ok((mid, xdot, umid))
        }
    }
}

/// Columns `x_i x_j`, `i <= j`, of the deduplicated quadratic data, ordered
/// `(0,0), (0,1), ..., (0,n-1), (1,1), ...`.
pub fn quadratic_regressors(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    DMatrix::from_fn(pairs.len(), k, |p, c| {
        x[(pairs[p].0, c)] * x[(pairs[p].1, c)]
    })
}

/// Least-squares fit of `x' = A x + H (x (x) x) + B u` to projected data.
///
/// `snap` holds full-order states (and inputs); they are projected with
/// `basis^T`. Derivatives are taken from `snap.xdot` when present (projected
/// as well) and otherwise estimated from the projected states with
/// `opts.derivatives`. Each regressor
/// column is scaled to unit norm before the SVD solve; with `reg = 0` a
/// numerically rank-deficient data matrix is an error.
pub fn operator_inference(
    snap: &SnapshotSet,
    basis: &DMatrix<f64>,
    opts: &OpInfOptions,
) -> Result<RomArtifact> {
    if basis.nrows() != snap.state_dim() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, snapshots have dimension {}",
            basis.nrows(),
            snap.state_dim()
        )));
    }
    if !(opts.reg >= 0.0) {
        return Err(Error::Invalid(format!(
            "ridge weight must be non-negative, got {}",
            opts.reg
        )));
    }
    let n = basis.ncols();
    let vt = basis.transpose();
    if snap.is_empty() {
        return Err(Error::RankDeficient("no snapshots".into()));
    }
    let (x, xdot, u) = regression_data(snap, &vt, opts.derivatives)?;
    let k = x.ncols();
    let m = u.nrows();
    let q = quadratic_regressors(&x);
    let nq = q.nrows();
    let cols = n + nq + m;

    // data matrix D (K x cols), rows are snapshots
    let mut d = DMatrix::zeros(k, cols);
    d.view_mut((0, 0), (k, n)).copy_from(&x.transpose());
    d.view_mut((0, n), (k, nq)).copy_from(&q.transpose());
    d.view_mut((0, n + nq), (k, m)).copy_from(&u.transpose());
    let scale = DVector::from_fn(cols, |c, _| {
        let s = d.column(c).norm();
        if s > 0.0 {
            1.0 / s
        } else {
            1.0
        }
    });
    for (c, mut col) in d.column_iter_mut().enumerate() {
        col *= scale[c];
    }
    let mut rhs = xdot.transpose();
    if opts.reg > 0.0 {
        let mut aug = DMatrix::zeros(k + cols, cols);
        aug.view_mut((0, 0), (k, cols)).copy_from(&d);
        for c in 0..cols {
            aug[(k + c, c)] = opts.reg.sqrt() * scale[c];
        }
        d = aug;
        let mut r = DMatrix::zeros(k + cols, n);
        r.view_mut((0, 0), (k, n)).copy_from(&rhs);
        rhs = r;
    }

    let dec = densela::svd(&d)?;
    let s = &dec.s;
    let tol = d.nrows().max(cols) as f64 * f64::EPSILON * s[0];
    let rank = s.iter().filter(|&&v| v > tol).count();
    let cond = s[0] / s[s.len() - 1];
    if s.len() < cols || rank < cols {
        return Err(Error::RankDeficient(format!(
            "operator inference data matrix has rank {rank} < {cols} (condition number {cond:e}); use a ridge weight reg > 0"
        )));
    }
    let utr = dec.u.transpose() * &rhs;
    let mut o = dec.v_t.transpose() * DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * utr;
    for (r, mut row) in o.row_iter_mut().enumerate() {
        row *= scale[r];
    }
    // o is cols x n; operators are its transposed blocks
    let a = o.rows(0, n).transpose();
    let hq = o.rows(n, nq).transpose();
    let b = o.rows(n + nq, m).transpose();
    let mut trip = Vec::with_capacity(n * nq);
    let mut p = 0;
    for i in 0..n {
        for j in i..n {
            for r in 0..n {
                trip.push((r, i * n + j, hq[(r, p)]));
            }
            p += 1;
        }
    }
    let h = QuadraticOperator::from_triplets(n, n, trip)?;
    let system = QBSystem::new(DMatrix::identity(n, n), a, h, Vec::new(), b, None)?;
    let max_real_eig = spectral_abscissa(&system)?;
    Ok(RomArtifact {
        method: RomMethod::Opinf,
        system,
        right: basis.clone(),
        left: vt,
        singular_values: vec![s.clone()],
        sigma: None,
        riccati_residuals: None,
        max_real_eig,
    })
}

/// `||X_N - V x_rom|| / ||X_N||` (Frobenius) for the ROM simulated on the
/// snapshot grid with the recorded inputs held piecewise-linearly. Returns
/// infinity when the ROM blows up.
pub fn reconstruction_error(
    art: &RomArtifact,
    snap: &SnapshotSet,
    opts: &IntegrateOptions,
) -> Result<f64> {
    let t = &snap.t;
    let k = t.len();
    if k < 2 {
        return Err(Error::Invalid("need at least two snapshots".into()));
    }
    let x0 = &art.left * snap.x.column(0);
    let u = snap.u.clone();
    let input = move |s: f64| -> DVector<f64> {
        let u = match &u {
            Some(u) => u,
            None => return DVector::zeros(0),
        };
        let pos = t.partition_point(|&tk| tk <= s).clamp(1, k - 1);
        let (t0, t1) = (t[pos - 1], t[pos]);
        let w = ((s - t0) / (t1 - t0)).clamp(0.0, 1.0);
        u.column(pos - 1) * (1.0 - w) + u.column(pos) * w
    };
    let run_opts = IntegrateOptions {
        output: crate::sim::OutputMode::Every(
            snap.uniform_step()
                .unwrap_or((t[k - 1] - t[0]) / (k - 1) as f64),
        ),
        breakpoints: t[1..k - 1].iter().map(|tk| tk - t[0]).collect(),
        max_steps: opts.max_steps.max(1000 * k),
        ..opts.clone()
    };
    let span = t[k - 1] - t[0];
    let shifted = |s: f64| input(s + t[0]);
    let traj = match integrate(&art.system, &x0, Some(&shifted), span, &run_opts) {
        Ok(traj) => traj,
        Err(Error::Integration { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    if traj.status == TerminalStatus::Diverged || traj.x.ncols() != k {
        return Ok(f64::INFINITY);
    }
    let recon = &art.right * &traj.x;
    Ok((&snap.x - recon).norm() / snap.x.norm())
}
