//! JSON representation of [`QBSystem`].
//!
//! Matrices are written either densely (row-major nested arrays) or as
//! `(row, col, value)` triplets, whichever is smaller; both forms are
//! accepted on input. `H` is always written as triplets with column index
//! `i * n + j`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbsys::{QBSystem, QuadraticOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    Dense {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    },
    Sparse {
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    },
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if 4 * nnz < rows * cols {
            let mut entries = Vec::with_capacity(nnz);
            for r in 0..rows {
                for c in 0..cols {
                    if m[(r, c)] != 0.0 {
                        entries.push((r, c, m[(r, c)]));
                    }
                }
            }
            Self::Sparse {
                rows,
                cols,
                entries,
            }
        } else {
            let data = (0..rows)
                .map(|r| m.row(r).iter().copied().collect())
                .collect();
            Self::Dense { rows, cols, data }
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            Self::Dense { rows, cols, data } => {
                if data.len() != *rows || data.iter().any(|r| r.len() != *cols) {
                    return Err(Error::Dimension(format!(
                        "dense matrix data does not match {rows}x{cols}"
                    )));
                }
                Ok(DMatrix::from_fn(*rows, *cols, |r, c| data[r][c]))
            }
            Self::Sparse {
                rows,
                cols,
                entries,
            } => {
                let mut m = DMatrix::zeros(*rows, *cols);
                for &(r, c, v) in entries {
                    if r >= *rows || c >= *cols {
                        return Err(Error::Dimension(format!(
                            "entry ({r}, {c}) outside {rows}x{cols}"
                        )));
                    }
                    m[(r, c)] += v;
                }
                Ok(m)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticData {
    pub rows: usize,
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Serialized model. `name` and `x0` are optional metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub e: MatrixData,
    pub a: MatrixData,
    pub h: QuadraticData,
    #[serde(default)]
    pub bilinear: Vec<MatrixData>,
    pub b: MatrixData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn from_system(sys: &QBSystem) -> Self {
        let h = sys.h();
        Self {
            name: None,
            n: sys.n(),
            m: sys.m(),
            e: MatrixData::from_matrix(sys.e()),
            a: MatrixData::from_matrix(sys.a()),
            h: QuadraticData {
                rows: h.rows(),
                n: h.state_dim(),
                entries: h.triplets().collect(),
            },
            bilinear: sys.bilinear().iter().map(MatrixData::from_matrix).collect(),
            b: MatrixData::from_matrix(sys.b()),
            c: sys.c().map(MatrixData::from_matrix),
            x0: None,
        }
    }

    pub fn to_system(&self) -> Result<QBSystem> {
        let h = QuadraticOperator::from_triplets(
            self.h.rows,
            self.h.n,
            self.h.entries.iter().copied(),
        )?;
        let bilinear = self
            .bilinear
            .iter()
            .map(MatrixData::to_matrix)
            .collect::<Result<Vec<_>>>()?;
        let c = self.c.as_ref().map(MatrixData::to_matrix).transpose()?;
        let sys = QBSystem::new(
            self.e.to_matrix()?,
            self.a.to_matrix()?,
            h,
            bilinear,
            self.b.to_matrix()?,
            c,
        )?;
        if sys.n() != self.n || sys.m() != self.m {
            return Err(Error::Dimension(format!(
                "model header says n = {}, m = {} but operators give n = {}, m = {}",
                self.n,
                self.m,
                sys.n(),
                sys.m()
            )));
        }
        Ok(sys)
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_model(path: impl AsRef<Path>, sys: &QBSystem) -> Result<()> {
    write_json(path, &ModelFile::from_system(sys))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<QBSystem> {
    read_json::<ModelFile>(path)?.to_system()
}
