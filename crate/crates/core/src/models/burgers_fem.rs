//! Periodic viscous Burgers equation with piecewise-linear finite elements and
//! piecewise-constant distributed controls.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbsys::{QBSystem, QuadraticOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersFemConfig {
    /// Number of nodes (unknowns) on the periodic unit interval.
    pub n: usize,
    pub epsilon: f64,
    /// Number of equal control intervals.
    pub m: usize,
    /// Only the periodic closure is implemented; `false` is rejected.
    pub periodic: bool,
}

impl Default for BurgersFemConfig {
    fn default() -> Self {
        Self {
            n: 101,
            epsilon: 1e-3,
            m: 3,
            periodic: true,
        }
    }
}

impl BurgersFemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Invalid(format!(
                "burgers-fem needs N >= 3, got {}",
                self.n
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Invalid(format!(
                "viscosity must be positive, got {}",
                self.epsilon
            )));
        }
        if self.m == 0 {
            return Err(Error::Invalid(
                "burgers-fem needs at least one control".into(),
            ));
        }
        if !self.periodic {
            return Err(Error::Invalid(
                "burgers-fem supports periodic boundaries only".into(),
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// `int_a^b` of the hat function centred at `c` with half-width `h`.
fn hat_integral(c: f64, h: f64, a: f64, b: f64) -> f64 {
    let rise = |s: f64| (s - (c - h)).powi(2) / (2.0 * h);
    let fall = |s: f64| -((c + h) - s).powi(2) / (2.0 * h);
    let mut total = 0.0;
    let (lo, hi) = (a.max(c - h), b.min(c));
    if hi > lo {
        total += rise(hi) - rise(lo);
    }
    let (lo, hi) = (a.max(c), b.min(c + h));
    if hi > lo {
        total += fall(hi) - fall(lo);
    }
    total
}

/// Initial profile `0.5 sin(2 pi xi)^2` on `[0, 0.5]`, zero elsewhere.
pub fn burgers_initial_profile(xi: f64) -> f64 {
    if (0.0..=0.5).contains(&xi) {
        0.5 * (2.0 * std::f64::consts::PI * xi).sin().powi(2)
    } else {
        0.0
    }
}

/// Returns the system and the nodal interpolant of the initial profile.
///
/// Nodes sit at `xi_k = k / N`. The mass matrix is `h/6 [1 4 1]`, diffusion
/// `eps/h [1 -2 1]` (both with periodic corners), and the convection term
/// `int 1/2 z^2 phi_k'` is integrated exactly:
/// `(z_{k-1}^2 + z_{k-1} z_k - z_k z_{k+1} - z_{k+1}^2) / 6`.
pub fn build_burgers_fem(cfg: &BurgersFemConfig) -> Result<(QBSystem, DVector<f64>)> {
    cfg.validate()?;
    let n = cfg.n;
    let h = cfg.step();
    let prev = |k: usize| (k + n - 1) % n;
    let next = |k: usize| (k + 1) % n;

    let mut e = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        e[(k, k)] += 4.0 * h / 6.0;
        e[(k, prev(k))] += h / 6.0;
        e[(k, next(k))] += h / 6.0;
        a[(k, k)] -= 2.0 * cfg.epsilon / h;
        a[(k, prev(k))] += cfg.epsilon / h;
        a[(k, next(k))] += cfg.epsilon / h;
    }

    let mut trip = Vec::with_capacity(4 * n);
    for k in 0..n {
        let (l, r) = (prev(k), next(k));
        trip.push((k, l * n + l, 1.0 / 6.0));
        trip.push((k, l * n + k, 1.0 / 6.0));
        trip.push((k, k * n + r, -1.0 / 6.0));
        trip.push((k, r * n + r, -1.0 / 6.0));
    }
    let hq = QuadraticOperator::from_triplets(n, n, trip)?;

    let mut b = DMatrix::zeros(n, cfg.m);
    for j in 0..cfg.m {
        let lo = j as f64 / cfg.m as f64;
        let hi = (j + 1) as f64 / cfg.m as f64;
        for k in 0..n {
            let c = k as f64 * h;
            b[(k, j)] = [-1.0, 0.0, 1.0]
                .iter()
                .map(|s| hat_integral(c + s, h, lo, hi))
                .sum();
        }
    }

    let x0 = DVector::from_fn(n, |k, _| burgers_initial_profile(k as f64 * h));
    let sys = QBSystem::new(e, a, hq, Vec::new(), b, Some(DMatrix::identity(n, n)))?;
    Ok((sys, x0))
}
