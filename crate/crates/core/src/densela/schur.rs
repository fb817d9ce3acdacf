use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 100_000;

/// `m = q * t * q^T` with `q` orthogonal and `t` quasi-upper-triangular.
/// Every 2x2 diagonal block of `t` carries a complex-conjugate pair.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl RealSchur {
    pub fn eigenvalues(&self) -> Vec<Eigenvalue> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for (start, size) in schur_blocks(&self.t) {
            if size == 1 {
                out.push(Eigenvalue {
                    re: self.t[(start, start)],
                    im: 0.0,
                });
            } else {
                let (a, b) = block_eigenvalues(&self.t, start);
                out.push(a);
                out.push(b);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.q * &self.t * self.q.transpose()
    }
}

/// Eigenvalues of a general square matrix through [`real_schur`], whose QR
/// iteration is bounded (unlike an unbounded Francis sweep).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Eigenvalue>> {
    Ok(real_schur(m)?.eigenvalues())
}

/// Diagonal block layout `(start, size)` of a quasi-upper-triangular matrix.
pub fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, k: usize) -> (Eigenvalue, Eigenvalue) {
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (
            Eigenvalue {
                re: half_tr + s,
                im: 0.0,
            },
            Eigenvalue {
                re: half_tr - s,
                im: 0.0,
            },
        )
    } else {
        let s = (-disc).sqrt();
        (
            Eigenvalue { re: half_tr, im: s },
            Eigenvalue {
                re: half_tr,
                im: -s,
            },
        )
    }
}

pub fn real_schur(m: &DMatrix<f64>) -> Result<RealSchur> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "real_schur needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(RealSchur {
            q: DMatrix::zeros(0, 0),
            t: DMatrix::zeros(0, 0),
        });
    }
    let (q, t) = [1.0, 4.0, 16.0, 64.0]
        .into_iter()
        .find_map(|k| m.clone().try_schur(k * f64::EPSILON, SCHUR_MAX_ITER))
        .ok_or(Error::SchurNoConvergence)?
        .unpack();
    let mut s = RealSchur { q, t };
    standardize(&mut s);
    Ok(s)
}

/// Clears negligible subdiagonal entries, zeroes everything below the first
/// subdiagonal and splits 2x2 blocks that carry two real eigenvalues.
fn standardize(s: &mut RealSchur) {
    let n = s.t.nrows();
    for j in 0..n {
        for i in j + 2..n {
            s.t[(i, j)] = 0.0;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let sub = s.t[(i + 1, i)];
        if sub != 0.0 && sub.abs() <= f64::EPSILON * (s.t[(i, i)].abs() + s.t[(i + 1, i + 1)].abs())
        {
            s.t[(i + 1, i)] = 0.0;
        }
    }
    let mut i = 0;
    while i + 1 < n {
        if s.t[(i + 1, i)] == 0.0 {
            i += 1;
            continue;
        }
        split_real_block(s, i);
        i += 2;
    }
}

/// Triangularize the 2x2 block at `k` when its eigenvalues are real.
fn split_real_block(s: &mut RealSchur, k: usize) {
    let (a, b, c, d) = (
        s.t[(k, k)],
        s.t[(k, k + 1)],
        s.t[(k + 1, k)],
        s.t[(k + 1, k + 1)],
    );
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc < 0.0 {
        return;
    }
    let half_tr = 0.5 * (a + d);
    let root = disc.sqrt();
    // pick the eigenvalue giving the better-conditioned eigenvector
    let lambda = if (a - d) >= 0.0 {
        half_tr + root
    } else {
        half_tr - root
    };
    let (x, y) = if (lambda - d).abs() + c.abs() >= b.abs() + (lambda - a).abs() {
        (lambda - d, c)
    } else {
        (b, lambda - a)
    };
    let r = x.hypot(y);
    if r == 0.0 {
        return;
    }
    let (cs, sn) = (x / r, y / r);
    apply_rotation(s, k, cs, sn);
    s.t[(k + 1, k)] = 0.0;
}

/// `t <- g^T t g`, `q <- q g` with `g = [[c, -s], [s, c]]` acting on rows and
/// columns `k, k+1`.
fn apply_rotation(s: &mut RealSchur, k: usize, c: f64, sn: f64) {
    let n = s.t.nrows();
    for j in 0..n {
        let (t1, t2) = (s.t[(k, j)], s.t[(k + 1, j)]);
        s.t[(k, j)] = c * t1 + sn * t2;
        s.t[(k + 1, j)] = -sn * t1 + c * t2;
    }
    for i in 0..n {
        let (t1, t2) = (s.t[(i, k)], s.t[(i, k + 1)]);
        s.t[(i, k)] = c * t1 + sn * t2;
        s.t[(i, k + 1)] = -sn * t1 + c * t2;
        let (q1, q2) = (s.q[(i, k)], s.q[(i, k + 1)]);
        s.q[(i, k)] = c * q1 + sn * q2;
        s.q[(i, k + 1)] = -sn * q1 + c * q2;
    }
}

/// Real Schur form with the eigenvalues accepted by `select` moved to the
/// leading diagonal blocks. Returns the form and the number of selected
/// eigenvalues (complex pairs count as two).
pub fn ordered_real_schur<F>(m: &DMatrix<f64>, select: F) -> Result<(RealSchur, usize)>
where
    F: Fn(Eigenvalue) -> bool,
{
    let mut s = real_schur(m)?;
    let k = reorder(&mut s, select)?;
    Ok((s, k))
}

fn reorder<F>(s: &mut RealSchur, select: F) -> Result<usize>
where
    F: Fn(Eigenvalue) -> bool,
{
    let n = s.t.nrows();
    let mut ks = 0;
    let mut pos = 0;
    while pos < n {
        let size = if pos + 1 < n && s.t[(pos + 1, pos)] != 0.0 {
            2
        } else {
            1
        };
        let ev = if size == 1 {
            Eigenvalue {
                re: s.t[(pos, pos)],
                im: 0.0,
            }
        } else {
            block_eigenvalues(&s.t, pos).0
        };
        if select(ev) {
            let mut here = pos;
            while here > ks {
                let prev = if here >= 2 && s.t[(here - 1, here - 2)] != 0.0 {
                    2
                } else {
                    1
                };
                swap_blocks(s, here - prev, prev, size)?;
                here -= prev;
            }
            ks += size;
        }
        pos += size;
    }
    Ok(ks)
}

/// Swap the adjacent diagonal blocks `t11` (size `p`, starting at `j`) and
/// `t22` (size `q`) by an orthogonal similarity.
fn swap_blocks(s: &mut RealSchur, j: usize, p: usize, q: usize) -> Result<()> {
    let n = s.t.nrows();
    let w = p + q;
    let t11 = s.t.view((j, j), (p, p)).into_owned();
    let t12 = s.t.view((j, j + p), (p, q)).into_owned();
    let t22 = s.t.view((j + p, j + p), (q, q)).into_owned();
    let gap = eigen_gap(&t11, &t22);

    // t11 x - x t22 = t12, vec form (I_q (x) t11 - t22^T (x) I_p) vec(x) = vec(t12)
    let mut kmat = DMatrix::zeros(p * q, p * q);
    for c in 0..q {
        for r in 0..p {
            let row = c * p + r;
            for rr in 0..p {
                kmat[(row, c * p + rr)] += t11[(r, rr)];
            }
            for cc in 0..q {
                kmat[(row, cc * p + r)] -= t22[(cc, c)];
            }
        }
    }
    let rhs = DVector::from_iterator(p * q, t12.iter().copied());
    let x = kmat
        .clone()
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::ReorderFailed { position: j, gap })?;

    let mut basis = DMatrix::zeros(w, q);
    for c in 0..q {
        for r in 0..p {
            basis[(r, c)] = -x[c * p + r];
        }
        basis[(p + c, c)] = 1.0;
    }
    let qx = basis.qr().q();
    let mut full = DMatrix::zeros(w, w);
    full.view_mut((0, 0), (w, q)).copy_from(&qx);
    // complete to an orthogonal basis of R^w
    let complement = orthogonal_complement(&qx);
    full.view_mut((0, q), (w, p)).copy_from(&complement);

    let rows = s.t.rows(j, w).into_owned();
    let new_rows = full.transpose() * rows;
    s.t.rows_mut(j, w).copy_from(&new_rows);
    let cols = s.t.columns(j, w).into_owned();
    let new_cols = &cols * &full;
    s.t.columns_mut(j, w).copy_from(&new_cols);
    let qcols = s.q.columns(j, w).into_owned();
    let new_q = &qcols * &full;
    s.q.columns_mut(j, w).copy_from(&new_q);

    let lower = s.t.view((j + q, j), (p, q)).norm();
    let scale = s.t.view((j, j), (w, w)).norm().max(f64::MIN_POSITIVE);
    if lower > 1e-10 * scale {
        return Err(Error::ReorderFailed { position: j, gap });
    }
    s.t.view_mut((j + q, j), (p, q)).fill(0.0);
    for c in j..(j + w).min(n) {
        for r in (c + 2).max(j)..(j + w).min(n) {
            s.t[(r, c)] = 0.0;
        }
    }
    if q == 1 && j + 1 < n && p == 1 {
        s.t[(j + 1, j)] = 0.0;
    }
    // new leading block of size q, trailing of size p
    if q == 2 {
        split_real_block(s, j);
    }
    if p == 2 {
        split_real_block(s, j + q);
    }
    Ok(())
}

fn orthogonal_complement(qx: &DMatrix<f64>) -> DMatrix<f64> {
    let w = qx.nrows();
    let k = qx.ncols();
    let full = DMatrix::from_fn(w, w, |r, c| if c < k { qx[(r, c)] } else { 0.0 });
    let mut basis = full.clone();
    let mut next = k;
    for e in 0..w {
        if next == w {
            break;
        }
        let mut v = DVector::from_fn(w, |r, _| if r == e { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for c in 0..next {
                let col = basis.column(c).into_owned();
                let d = col.dot(&v);
                v -= col * d;
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            basis.set_column(next, &(v / nv));
            next += 1;
        }
    }
    basis.columns(k, w - k).into_owned()
}

fn eigen_gap(t11: &DMatrix<f64>, t22: &DMatrix<f64>) -> f64 {
    let ev = |t: &DMatrix<f64>| -> Vec<Eigenvalue> {
        if t.nrows() == 1 {
            vec![Eigenvalue {
                re: t[(0, 0)],
                im: 0.0,
            }]
        } else {
            let (a, b) = block_eigenvalues(t, 0);
            vec![a, b]
        }
    };
    let mut gap = f64::INFINITY;
    for a in ev(t11) {
        for b in ev(t22) {
            gap = gap.min((a.re - b.re).hypot(a.im - b.im));
        }
    }
    gap
}
