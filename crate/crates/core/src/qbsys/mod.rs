//! Quadratic-bilinear systems `E x' = A x + H (x (x) x) + sum_i N_i x u_i + B u`.

mod quadratic;

pub use quadratic::{symmetrize_h, QuadEntry, QuadSlices, QuadraticOperator};

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Default relative tolerance for accepting a point as an equilibrium.
pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-8;

/// Immutable quadratic-bilinear model. `H` is symmetrized at construction and
/// `E` is LU-factorized once.
#[derive(Clone, Debug)]
pub struct QBSystem {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    h: QuadraticOperator,
    bilinear: Vec<DMatrix<f64>>,
    b: DMatrix<f64>,
    c: Option<DMatrix<f64>>,
    e_lu: LU<f64, Dyn, Dyn>,
    e_identity: bool,
}

impl QBSystem {
    pub fn new(
        e: DMatrix<f64>,
        a: DMatrix<f64>,
        h: QuadraticOperator,
        bilinear: Vec<DMatrix<f64>>,
        b: DMatrix<f64>,
        c: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square, got {:?}",
                a.shape()
            )));
        }
        if e.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "E is {:?}, expected {n}x{n}",
                e.shape()
            )));
        }
        if h.rows() != n || h.state_dim() != n {
            return Err(Error::Dimension(format!(
                "H is {}x{}, expected {n}x{}",
                h.rows(),
                h.state_dim() * h.state_dim(),
                n * n
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        let m = b.ncols();
        if bilinear.len() != m && !bilinear.is_empty() {
            return Err(Error::Dimension(format!(
                "{} bilinear matrices for {m} inputs",
                bilinear.len()
            )));
        }
        if bilinear.iter().any(|nm| nm.shape() != (n, n)) {
            return Err(Error::Dimension(format!(
                "bilinear matrices must be {n}x{n}"
            )));
        }
        if let Some(c) = &c {
            if c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "C has {} columns, expected {n}",
                    c.ncols()
                )));
            }
        }
        let bilinear = if bilinear.is_empty() {
            vec![DMatrix::zeros(n, n); m]
        } else {
            bilinear
        };
        let e_identity = e == DMatrix::identity(n, n);
        let e_lu = e.clone().lu();
        if n > 0 {
            let u = e_lu.u();
            let diag = u.diagonal().map(f64::abs);
            let ratio = diag.min() / diag.max();
            if !(ratio > n as f64 * f64::EPSILON) {
                return Err(Error::SingularMass(ratio));
            }
        }
        Ok(Self {
            e,
            a,
            h: h.symmetrized(),
            bilinear,
            b,
            c,
            e_lu,
            e_identity,
        })
    }

    /// Autonomous system `E x' = A x + H (x (x) x)`.
    pub fn autonomous(e: DMatrix<f64>, a: DMatrix<f64>, h: QuadraticOperator) -> Result<Self> {
        let n = a.nrows();
        Self::new(e, a, h, Vec::new(), DMatrix::zeros(n, 0), None)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &QuadraticOperator {
        &self.h
    }

    pub fn bilinear(&self) -> &[DMatrix<f64>] {
        &self.bilinear
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> Option<&DMatrix<f64>> {
        self.c.as_ref()
    }

    pub fn e_is_identity(&self) -> bool {
        self.e_identity
    }

    pub fn with_output(mut self, c: Option<DMatrix<f64>>) -> Result<Self> {
        if let Some(c) = &c {
            if c.ncols() != self.n() {
                return Err(Error::Dimension(format!(
                    "C has {} columns, expected {}",
                    c.ncols(),
                    self.n()
                )));
            }
        }
        self.c = c;
        Ok(self)
    }

    fn check_state(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n()
            )));
        }
        if let Some(u) = u {
            if u.len() != self.m() {
                return Err(Error::Dimension(format!(
                    "input has length {}, expected {}",
                    u.len(),
                    self.m()
                )));
            }
        }
        Ok(())
    }

    /// `A x + H (x (x) x) + sum_i N_i x u_i + B u` (the right-hand side before
    /// the mass matrix is applied). `u = None` means zero input.
    pub fn force(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut f = &self.a * x;
        self.h.apply_into(x, x, &mut f);
        if let Some(u) = u {
            for (i, nm) in self.bilinear.iter().enumerate() {
                if u[i] != 0.0 {
                    f += nm * x * u[i];
                }
            }
            f += &self.b * u;
        }
        f
    }

    /// Derivative of [`Self::force`] with respect to `x`.
    pub fn force_jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DMatrix<f64> {
        let mut j = &self.a + self.h.kron_identity(x) * 2.0;
        if let Some(u) = u {
            for (i, nm) in self.bilinear.iter().enumerate() {
                if u[i] != 0.0 {
                    j += nm * u[i];
                }
            }
        }
        j
    }

    /// `E^{-1} v` through the cached factorization.
    pub fn solve_mass(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.e_identity {
            return Ok(v.clone());
        }
        self.e_lu
            .solve(v)
            .ok_or_else(|| Error::Singular("mass matrix E".into()))
    }

    pub fn solve_mass_matrix(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.e_identity {
            return Ok(v.clone());
        }
        self.e_lu
            .solve(v)
            .ok_or_else(|| Error::Singular("mass matrix E".into()))
    }

    /// `x' = E^{-1}(A x + H (x (x) x) + sum_i N_i x u_i + B u)`.
    pub fn rhs(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        self.check_state(x, u)?;
        self.solve_mass(&self.force(x, u))
    }

    /// `E^{-1}(A + 2 H (I (x) x) + sum_i N_i u_i)`.
    pub fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
        self.check_state(x, u)?;
        self.solve_mass_matrix(&self.force_jacobian(x, u))
    }

    /// `E^{-1} A`.
    pub fn linear_part(&self) -> Result<DMatrix<f64>> {
        self.solve_mass_matrix(&self.a)
    }

    pub fn slices(&self) -> QuadSlices {
        QuadSlices { k: self.h.slices() }
    }

    /// Move the equilibrium `x_e` to the origin: `A' = A + 2 H (I (x) x_e)`,
    /// with `N_i x_e` folded into the input matrix.
    pub fn shift_equilibrium(&self, x_e: &DVector<f64>, tol: f64) -> Result<Self> {
        self.check_state(x_e, None)?;
        let residual = (&self.a * x_e + self.h.apply(x_e, x_e)).norm();
        let bound = tol * (self.a.norm() * x_e.norm() + 1.0);
        if residual > bound {
            return Err(Error::NotEquilibrium { residual, bound });
        }
        let a = &self.a + self.h.kron_identity(x_e) * 2.0;
        let mut b = self.b.clone();
        for (i, nm) in self.bilinear.iter().enumerate() {
            let shift = nm * x_e;
            let mut col = b.column_mut(i);
            col += shift;
        }
        Self::new(
            self.e.clone(),
            a,
            self.h.clone(),
            self.bilinear.clone(),
            b,
            self.c.clone(),
        )
    }

    /// Close the loop with `u = K x`: `A' = A + B K` and the bilinear terms
    /// `N_i x (K x)_i` become quadratic. The result has no inputs.
    pub fn absorb_linear_feedback(&self, k: &DMatrix<f64>) -> Result<Self> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::Dimension(format!(
                "feedback gain is {:?}, expected {}x{}",
                k.shape(),
                self.m(),
                self.n()
            )));
        }
        let a = &self.a + &self.b * k;
        // N_i x (k_i^T x) = sum_j x_j k_ij N_i x, so slice K_j gains sum_i k_ij N_i
        let mut h = self.h.clone();
        for j in 0..self.n() {
            let mut block = DMatrix::zeros(self.n(), self.n());
            for (i, nm) in self.bilinear.iter().enumerate() {
                if k[(i, j)] != 0.0 {
                    block += nm * k[(i, j)];
                }
            }
            if block.iter().any(|&v| v != 0.0) {
                h = h.add_to_slice(j, &block);
            }
        }
        let n = self.n();
        Self::new(
            self.e.clone(),
            a,
            h,
            Vec::new(),
            DMatrix::zeros(n, 0),
            self.c.clone(),
        )
    }

    /// Equivalent system with `E = I`.
    pub fn with_mass_folded(&self) -> Result<Self> {
        if self.e_identity {
            return Ok(self.clone());
        }
        let n = self.n();
        let e_inv = self.solve_mass_matrix(&DMatrix::identity(n, n))?;
        let a = &e_inv * &self.a;
        let h = self.h.left_multiply(&e_inv)?;
        let bilinear = self.bilinear.iter().map(|nm| &e_inv * nm).collect();
        let b = &e_inv * &self.b;
        Self::new(DMatrix::identity(n, n), a, h, bilinear, b, self.c.clone())
    }

    /// Drop inputs and bilinear terms.
    pub fn without_inputs(&self) -> Result<Self> {
        Self::autonomous(self.e.clone(), self.a.clone(), self.h.clone())?
            .with_output(self.c.clone())
    }
}
