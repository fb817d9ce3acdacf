//! Viscous Burgers equation on `[0, 1]` with Dirichlet boundary control
//! `z(0) = u`, `z(1) = -u`, central finite differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbsys::{QBSystem, QuadraticOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersFdConfig {
    /// Number of interior grid points (the state dimension).
    pub n: usize,
    pub epsilon: f64,
}

impl Default for BurgersFdConfig {
    fn default() -> Self {
        Self {
            n: 128,
            epsilon: 0.1,
        }
    }
}

impl BurgersFdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Invalid(format!(
                "burgers-fd needs N >= 3, got {}",
                self.n
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Invalid(format!(
                "viscosity must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Grid spacing; interior nodes sit at `xi_k = (k + 1) h`.
    pub fn step(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }
}

/// Skew-symmetric convection stencil
/// `-(z_{k+1}^2 - z_{k-1}^2 + z_k z_{k+1} - z_k z_{k-1}) / (6h)` at node `k`,
/// with neighbours taken periodically.
fn skew_convection(n: usize, h: f64, periodic: bool) -> Vec<(usize, usize, f64)> {
    let s = 1.0 / (6.0 * h);
    let mut trip = Vec::with_capacity(4 * n);
    for k in 0..n {
        let left = if k > 0 {
            Some(k - 1)
        } else if periodic {
            Some(n - 1)
        } else {
            None
        };
        let right = if k + 1 < n {
            Some(k + 1)
        } else if periodic {
            Some(0)
        } else {
            None
        };
        if let Some(r) = right {
            trip.push((k, r * n + r, -s));
            trip.push((k, k * n + r, -s));
        }
        if let Some(l) = left {
            trip.push((k, l * n + l, s));
            trip.push((k, k * n + l, s));
        }
    }
    trip
}

/// Interior nodes use the energy-conserving skew-symmetric flux. At the two
/// nodes next to the boundary the squared ghost value `u^2` would leave the
/// quadratic-bilinear class, so the ghost enters only through the advective
/// product `z_k u / (2h)`, which lands in `N_1`. With `z_{-1} = u` and
/// `z_N = -u`, diffusion contributes `B[0] = eps/h^2`, `B[N-1] = -eps/h^2`.
pub fn build_burgers_fd(cfg: &BurgersFdConfig) -> Result<QBSystem> {
    cfg.validate()?;
    let n = cfg.n;
    let h = cfg.step();
    let d = cfg.epsilon / (h * h);
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = -2.0 * d;
        if k > 0 {
            a[(k, k - 1)] = d;
        }
        if k + 1 < n {
            a[(k, k + 1)] = d;
        }
    }
    let s = 1.0 / (6.0 * h);
    let mut trip = skew_convection(n, h, false);
    // boundary rows: -z_k (z_{k+1} - z_{k-1}) / (2h) restricted to the state part
    trip.retain(|&(row, _, _)| row != 0 && row != n - 1);
    trip.push((0, 1, -3.0 * s));
    trip.push((n - 1, (n - 1) * n + (n - 2), 3.0 * s));
    let hq = QuadraticOperator::from_triplets(n, n, trip)?;

    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = d;
    b[(n - 1, 0)] = -d;
    let mut n1 = DMatrix::zeros(n, n);
    n1[(0, 0)] = 3.0 * s;
    n1[(n - 1, n - 1)] = 3.0 * s;
    QBSystem::new(DMatrix::identity(n, n), a, hq, vec![n1], b, None)
}

/// Periodic, inviscid variant of the convection operator; the discrete energy
/// `x^T H (x (x) x)` vanishes identically.
pub fn periodic_convection(n: usize) -> Result<QuadraticOperator> {
    if n < 3 {
        return Err(Error::Invalid(format!(
            "periodic convection needs n >= 3, got {n}"
        )));
    }
    QuadraticOperator::from_triplets(n, n, skew_convection(n, 1.0 / n as f64, true))
}
