use nalgebra::{DMatrix, DVector};

use crate::densela;
use crate::error::{Error, Result};

/// One nonzero of `H`: the coefficient of `x_i * y_j` in output `row`, i.e.
/// the entry `H[row, i * n + j]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadEntry {
    pub row: usize,
    pub i: usize,
    pub j: usize,
    pub val: f64,
}

/// Sparse `rows x n^2` matrix acting on Kronecker products `x (x) y`.
///
/// Entries are kept sorted by `(i, j, row)` with duplicates merged and exact
/// zeros dropped, so two operators with the same action compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticOperator {
    rows: usize,
    n: usize,
    entries: Vec<QuadEntry>,
}

/// Dense representation is used for norms while `rows * n^2` stays below this.
const DENSE_NORM_LIMIT: usize = 4_000_000;

impl QuadraticOperator {
    pub fn zeros(rows: usize, n: usize) -> Self {
        Self {
            rows,
            n,
            entries: Vec::new(),
        }
    }

    /// Build from `(row, column, value)` triplets with `column = i * n + j`.
    /// Duplicate positions are summed.
    pub fn from_triplets<I>(rows: usize, n: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries = Vec::new();
        for (row, col, val) in triplets {
            if row >= rows || col >= n * n {
                return Err(Error::Dimension(format!(
                    "quadratic entry ({row}, {col}) outside {rows}x{}",
                    n * n
                )));
            }
            entries.push(QuadEntry {
                row,
                i: col / n,
                j: col % n,
                val,
            });
        }
        Ok(Self::from_entries(rows, n, entries))
    }

    fn from_entries(rows: usize, n: usize, mut entries: Vec<QuadEntry>) -> Self {
        entries.sort_by_key(|e| (e.i, e.j, e.row));
        let mut merged: Vec<QuadEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if (last.i, last.j, last.row) == (e.i, e.j, e.row) => last.val += e.val,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.val != 0.0);
        Self {
            rows,
            n,
            entries: merged,
        }
    }

    pub fn from_dense(h: &DMatrix<f64>) -> Result<Self> {
        let n = (h.ncols() as f64).sqrt().round() as usize;
        if n * n != h.ncols() {
            return Err(Error::Dimension(format!(
                "H must have n^2 columns, got {}",
                h.ncols()
            )));
        }
        let mut entries = Vec::new();
        for col in 0..h.ncols() {
            for row in 0..h.nrows() {
                let val = h[(row, col)];
                if val != 0.0 {
                    entries.push(QuadEntry {
                        row,
                        i: col / n,
                        j: col % n,
                        val,
                    });
                }
            }
        }
        Ok(Self {
            rows: h.nrows(),
            n,
            entries,
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.rows, self.n * self.n);
        for e in &self.entries {
            h[(e.row, e.i * self.n + e.j)] += e.val;
        }
        h
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// State dimension `n` (the operator has `n^2` columns).
    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QuadEntry] {
        &self.entries
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .map(move |e| (e.row, e.i * self.n + e.j, e.val))
    }

    /// Column blocks `(H[:, i n + j] + H[:, j n + i]) / 2`; same action on
    /// `x (x) x`.
    pub fn symmetrized(&self) -> Self {
        let mut entries = Vec::with_capacity(2 * self.entries.len());
        for e in &self.entries {
            if e.i == e.j {
                entries.push(*e);
            } else {
                entries.push(QuadEntry {
                    val: 0.5 * e.val,
                    ..*e
                });
                entries.push(QuadEntry {
                    i: e.j,
                    j: e.i,
                    val: 0.5 * e.val,
                    ..*e
                });
            }
        }
        Self::from_entries(self.rows, self.n, entries)
    }

    /// Largest `|H[:, i n + j] - H[:, j n + i]|` entry.
    pub fn asymmetry(&self) -> f64 {
        let swapped = Self::from_entries(
            self.rows,
            self.n,
            self.entries
                .iter()
                .map(|e| QuadEntry {
                    i: e.j,
                    j: e.i,
                    ..*e
                })
                .collect(),
        );
        let diff = self.add(&swapped.scaled(-1.0));
        diff.entries.iter().fold(0.0, |m, e| m.max(e.val.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| QuadEntry {
                val: e.val * s,
                ..*e
            })
            .collect();
        Self::from_entries(self.rows, self.n, entries)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(
            (self.rows, self.n),
            (other.rows, other.n),
            "quadratic operator shapes differ"
        );
        let entries = self
            .entries
            .iter()
            .chain(other.entries.iter())
            .copied()
            .collect();
        Self::from_entries(self.rows, self.n, entries)
    }

    /// `H (x (x) y)`.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        self.apply_into(x, y, &mut out);
        out
    }

    /// `out += H (x (x) y)`.
    pub fn apply_into(&self, x: &DVector<f64>, y: &DVector<f64>, out: &mut DVector<f64>) {
        for e in &self.entries {
            out[e.row] += e.val * x[e.i] * y[e.j];
        }
    }

    /// `H (I (x) x)`: column `i` is `sum_j H[:, i n + j] x_j`.
    pub fn kron_identity(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.n);
        for e in &self.entries {
            out[(e.row, e.i)] += e.val * x[e.j];
        }
        out
    }

    /// Column blocks `K_i = H[:, i n .. (i + 1) n]`.
    pub fn slices(&self) -> Vec<DMatrix<f64>> {
        let mut k = vec![DMatrix::zeros(self.rows, self.n); self.n];
        for e in &self.entries {
            k[e.i][(e.row, e.j)] += e.val;
        }
        k
    }

    /// Add `block` to column block `K_i`.
    pub fn add_to_slice(&self, i: usize, block: &DMatrix<f64>) -> Self {
        let mut entries = self.entries.clone();
        for j in 0..self.n {
            for row in 0..self.rows {
                let v = block[(row, j)];
                if v != 0.0 {
                    entries.push(QuadEntry { row, i, j, val: v });
                }
            }
        }
        Self::from_entries(self.rows, self.n, entries)
    }

    /// `H H^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.rows, self.rows);
        let mut start = 0;
        while start < self.entries.len() {
            let key = (self.entries[start].i, self.entries[start].j);
            let mut end = start;
            while end < self.entries.len() && (self.entries[end].i, self.entries[end].j) == key {
                end += 1;
            }
            let col = &self.entries[start..end];
            for a in col {
                for b in col {
                    g[(a.row, b.row)] += a.val * b.val;
                }
            }
            start = end;
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.val * e.val)
            .sum::<f64>()
            .sqrt()
    }

    /// Spectral norm of the `rows x n^2` matrix.
    pub fn spectral_norm(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.rows * self.n * self.n <= DENSE_NORM_LIMIT {
            densela::spectral_norm(&self.to_dense())
        } else {
            densela::gram_spectral_norm(&self.gram())
        }
    }

    /// `left * H * (right (x) right)` without forming the Kronecker product.
    /// `left` defaults to the identity.
    pub fn transform(&self, left: Option<&DMatrix<f64>>, right: &DMatrix<f64>) -> Result<Self> {
        if right.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "right factor has {} rows, state dimension is {}",
                right.nrows(),
                self.n
            )));
        }
        if let Some(l) = left {
            if l.ncols() != self.rows {
                return Err(Error::Dimension(format!(
                    "left factor has {} columns, H has {} rows",
                    l.ncols(),
                    self.rows
                )));
            }
        }
        let s = right.ncols();
        // H (R (x) R): column (a, b) = sum over entries of val * R[i, a] * R[j, b]
        let mut hr = DMatrix::zeros(self.rows, s * s);
        for e in &self.entries {
            for a in 0..s {
                let ra = e.val * right[(e.i, a)];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..s {
                    hr[(e.row, a * s + b)] += ra * right[(e.j, b)];
                }
            }
        }
        let out = match left {
            Some(l) => l * hr,
            None => hr,
        };
        Self::from_dense(&out)
    }

    /// `left * H`, keeping the column pattern of `H`.
    pub fn left_multiply(&self, left: &DMatrix<f64>) -> Result<Self> {
        if left.ncols() != self.rows {
            return Err(Error::Dimension(format!(
                "left factor has {} columns, H has {} rows",
                left.ncols(),
                self.rows
            )));
        }
        let mut entries = Vec::new();
        let mut start = 0;
        while start < self.entries.len() {
            let (i, j) = (self.entries[start].i, self.entries[start].j);
            let mut col = DVector::zeros(self.rows);
            let mut end = start;
            while end < self.entries.len() && (self.entries[end].i, self.entries[end].j) == (i, j) {
                col[self.entries[end].row] += self.entries[end].val;
                end += 1;
            }
            let mapped = left * col;
            for (row, &val) in mapped.iter().enumerate() {
                if val != 0.0 {
                    entries.push(QuadEntry { row, i, j, val });
                }
            }
            start = end;
        }
        Ok(Self::from_entries(left.nrows(), self.n, entries))
    }
}

/// The column blocks `K_i` of `H`, with `H (x (x) x) = sum_i x_i K_i x`.
#[derive(Clone, Debug)]
pub struct QuadSlices {
    pub k: Vec<DMatrix<f64>>,
}

impl QuadSlices {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let rows = self.k.first().map_or(0, |k| k.nrows());
        let mut out = DVector::zeros(rows);
        for (i, ki) in self.k.iter().enumerate() {
            out += ki * x * x[i];
        }
        out
    }

    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.k.len();
        let rows = self.k.first().map_or(0, |k| k.nrows());
        let mut h = DMatrix::zeros(rows, n * n);
        for (i, ki) in self.k.iter().enumerate() {
            h.view_mut((0, i * n), (rows, n)).copy_from(ki);
        }
        h
    }
}

/// Dense symmetrization of a raw `n x n^2` matrix.
pub fn symmetrize_h(h_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h_raw.nrows();
    if h_raw.ncols() != n * n {
        return Err(Error::Dimension(format!(
            "H must be {n}x{}, got {}x{}",
            n * n,
            h_raw.nrows(),
            h_raw.ncols()
        )));
    }
    Ok(DMatrix::from_fn(n, n * n, |r, c| {
        let (i, j) = (c / n, c % n);
        0.5 * (h_raw[(r, i * n + j)] + h_raw[(r, j * n + i)])
    }))
}
