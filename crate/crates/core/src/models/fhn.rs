//! FitzHugh-Nagumo neuron model lifted to quadratic-bilinear form with the
//! auxiliary state `z = v^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbsys::{QBSystem, QuadraticOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FhnConfig {
    /// Grid points per variable, including both boundary nodes.
    pub grid: usize,
    pub length: f64,
    pub c: f64,
    pub gamma: f64,
    pub h: f64,
    pub epsilon: f64,
    /// Coefficient of `v^2` in the cubic nonlinearity `-v^3 + a v^2 - 0.1 v`.
    pub quadratic_coef: f64,
    pub mass: FhnMass,
}

/// Placement of `eps` in the mass matrix. The dynamics are identical; the
/// choice changes `E`, and with it every Lyapunov certificate built from `E`
/// and `A`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FhnMass {
    /// `E = diag(eps I, I, I)`.
    #[default]
    VoltageBlock,
    /// `E = eps I`, with the `w` and `z` rows multiplied by `eps`.
    Uniform,
}

impl Default for FhnConfig {
    fn default() -> Self {
        Self {
            grid: 200,
            length: 0.1,
            c: 0.05,
            gamma: 2.0,
            h: 0.5,
            epsilon: 0.015,
            quadratic_coef: 0.1,
            mass: FhnMass::VoltageBlock,
        }
    }
}

impl FhnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 {
            return Err(Error::Invalid(format!(
                "fhn needs at least 3 grid points, got {}",
                self.grid
            )));
        }
        for (name, v) in [("length", self.length), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "fhn {name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("c", self.c),
            ("gamma", self.gamma),
            ("h", self.h),
            ("quadratic_coef", self.quadratic_coef),
        ] {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("fhn {name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        3 * self.grid
    }

    pub fn step(&self) -> f64 {
        self.length / (self.grid - 1) as f64
    }

    pub fn v_index(&self, k: usize) -> usize {
        k
    }

    pub fn w_index(&self, k: usize) -> usize {
        self.grid + k
    }

    pub fn z_index(&self, k: usize) -> usize {
        2 * self.grid + k
    }
}

/// Boundary current `5e4 t^3 exp(-15 t)`.
pub fn fhn_current(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        5e4 * t.powi(3) * (-15.0 * t).exp()
    }
}

/// Input vector `[i(t), 1]`; the second channel carries the constant `c`.
pub fn fhn_input(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![fhn_current(t), 1.0])
}

/// Neumann Laplacian stencil at node `k` as `(neighbour, weight)` pairs,
/// scaled by `1/h^2`, using ghost nodes mirrored across each boundary.
fn laplacian_row(k: usize, g: usize) -> Vec<(usize, f64)> {
    if k == 0 {
        vec![(0, -2.0), (1, 2.0)]
    } else if k == g - 1 {
        vec![(g - 1, -2.0), (g - 2, 2.0)]
    } else {
        vec![(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)]
    }
}

/// Lifted system on states `[v; w; z]` with `z = v^2`, in the uniform-mass
/// form
///
/// ```text
/// eps v' = eps^2 v_xx - v z + a z - 0.1 v - w + c
/// eps w' = eps (h v - gamma w + c)
/// eps z' = 2 (eps^2 v v_xx - z^2 + a z v - 0.1 z - w v + c v)
/// ```
///
/// The boundary current enters as `-v_x(0) = i(t)` through a ghost node,
/// giving `B[v_0, 0] = 2 eps^2 / h` and `N_1[z_0, v_0] = 4 eps^2 / h`. The
/// constant channel gives `B[v_k, 1] = c`, `B[w_k, 1] = eps c` and `N_2[z_k, v_k] = 2 c`.
/// With [`FhnMass::VoltageBlock`] the `w` and `z` rows are divided by `eps`.
pub fn build_fhn_lifted(cfg: &FhnConfig) -> Result<QBSystem> {
    cfg.validate()?;
    let g = cfg.grid;
    let n = cfg.dim();
    let dx = cfg.step();
    let eps = cfg.epsilon;
    let lap = eps * eps / (dx * dx);
    let (vi, wi, zi) = (|k| k, |k| g + k, |k| 2 * g + k);

    let e = DMatrix::from_diagonal_element(n, n, eps);
    let mut a = DMatrix::zeros(n, n);
    let mut trip = Vec::new();
    for k in 0..g {
        for (j, wgt) in laplacian_row(k, g) {
            a[(vi(k), vi(j))] += lap * wgt;
            trip.push((zi(k), vi(k) * n + vi(j), 2.0 * lap * wgt));
        }
        a[(vi(k), zi(k))] += cfg.quadratic_coef;
        a[(vi(k), vi(k))] -= 0.1;
        a[(vi(k), wi(k))] -= 1.0;
        trip.push((vi(k), vi(k) * n + zi(k), -1.0));

        a[(wi(k), vi(k))] += eps * cfg.h;
        a[(wi(k), wi(k))] -= eps * cfg.gamma;

        a[(zi(k), zi(k))] -= 0.2;
        trip.push((zi(k), zi(k) * n + zi(k), -2.0));
        trip.push((zi(k), zi(k) * n + vi(k), 2.0 * cfg.quadratic_coef));
        trip.push((zi(k), wi(k) * n + vi(k), -2.0));
    }
    let hq = QuadraticOperator::from_triplets(n, n, trip)?;

    let mut b = DMatrix::zeros(n, 2);
    b[(vi(0), 0)] = 2.0 * eps * eps / dx;
    let mut n1 = DMatrix::zeros(n, n);
    n1[(zi(0), vi(0))] = 4.0 * eps * eps / dx;
    let mut n2 = DMatrix::zeros(n, n);
    for k in 0..g {
        b[(vi(k), 1)] = cfg.c;
        b[(wi(k), 1)] = eps * cfg.c;
        n2[(zi(k), vi(k))] = 2.0 * cfg.c;
    }
    let sys = QBSystem::new(e, a, hq, vec![n1, n2], b, None)?;
    match cfg.mass {
        FhnMass::Uniform => Ok(sys),
        FhnMass::VoltageBlock => {
            let d =
                DMatrix::from_diagonal(&DVector::from_fn(
                    n,
                    |i, _| if i < g { 1.0 } else { 1.0 / eps },
                ));
            let bilinear = sys.bilinear().iter().map(|ni| &d * ni).collect();
            QBSystem::new(
                &d * sys.e(),
                &d * sys.a(),
                sys.h().left_multiply(&d)?,
                bilinear,
                &d * sys.b(),
                None,
            )
        }
    }
}
