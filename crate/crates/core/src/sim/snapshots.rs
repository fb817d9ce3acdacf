use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{hermite, InputSignal, Trajectory};
use crate::error::{Error, Result};

/// Uniformly or non-uniformly sampled states with optional inputs and
/// derivative estimates (all as columns).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub t: Vec<f64>,
    pub x: DMatrix<f64>,
    pub u: Option<DMatrix<f64>>,
    pub xdot: Option<DMatrix<f64>>,
}

impl SnapshotSet {
    pub fn new(t: Vec<f64>, x: DMatrix<f64>, u: Option<DMatrix<f64>>) -> Result<Self> {
        if t.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "{} times for {} snapshots",
                t.len(),
                x.ncols()
            )));
        }
        if let Some(u) = &u {
            if u.ncols() != x.ncols() {
                return Err(Error::Dimension(format!(
                    "{} input columns for {} snapshots",
                    u.ncols(),
                    x.ncols()
                )));
            }
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            t,
            x,
            u,
            xdot: None,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    /// Rows `start..start + len` of every state-like matrix (one variable of a
    /// stacked state).
    pub fn rows(&self, start: usize, len: usize) -> Self {
        Self {
            t: self.t.clone(),
            x: self.x.rows(start, len).into_owned(),
            u: self.u.clone(),
            xdot: self.xdot.as_ref().map(|d| d.rows(start, len).into_owned()),
        }
    }

    /// Uniform spacing, if the grid is uniform to relative `1e-9`.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.t.len() < 2 {
            return None;
        }
        let dt = (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64;
        let uniform = self
            .t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        uniform.then_some(dt)
    }
}

/// Resample a trajectory onto `t0, t0 + every, ...` up to its final time
/// using cubic Hermite interpolation between stored steps (exact at the
/// stored points). Inputs are evaluated on the grid when a signal is given.
pub fn sample_snapshots(
    traj: &Trajectory,
    every: f64,
    input: Option<InputSignal>,
) -> Result<SnapshotSet> {
    let t0 = traj.t[0];
    let tf = traj.final_time();
    let span = tf - t0;
    if !(every > 0.0) || every > span * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!(
            "sampling interval {every} outside horizon [{t0}, {tf}]"
        )));
    }
    let tol = 1e-9 * every.max(tf.abs());
    let mut count = (span / every).round() as usize;
    if t0 + count as f64 * every > tf + tol {
        count -= 1;
    }
    let xdot = traj
        .xdot
        .as_ref()
        .ok_or_else(|| Error::Invalid("trajectory was recorded without derivatives".into()))?;
    let mut times = Vec::with_capacity(count + 1);
    let mut cols = Vec::with_capacity(count + 1);
    let mut seg = 0;
    for k in 0..=count {
        let tk = if k == count && (t0 + k as f64 * every - tf).abs() <= tol {
            tf
        } else {
            t0 + k as f64 * every
        };
        while seg + 2 < traj.t.len() && traj.t[seg + 1] < tk {
            seg += 1;
        }
        let (ta, tb) = (traj.t[seg], traj.t[(seg + 1).min(traj.t.len() - 1)]);
        let col = if tk == ta || tb == ta {
            traj.x.column(seg).into_owned()
        } else if tk == tb {
            traj.x.column(seg + 1).into_owned()
        } else {
            let h = tb - ta;
            hermite(
                (tk - ta) / h,
                h,
                &traj.x.column(seg).into_owned(),
                &xdot.column(seg).into_owned(),
                &traj.x.column(seg + 1).into_owned(),
                &xdot.column(seg + 1).into_owned(),
            )
        };
        times.push(tk);
        cols.push(col);
    }
    let u = input.map(|f| {
        DMatrix::from_columns(&times.iter().map(|&t| f(t)).collect::<Vec<DVector<f64>>>())
    });
    SnapshotSet::new(times, DMatrix::from_columns(&cols), u)
}

/// Fourth-order finite-difference time derivatives on a uniform grid:
/// five-point central stencil inside, one-sided five-point stencils at the
/// first and last two columns.
pub fn estimate_derivatives(snap: &SnapshotSet) -> Result<SnapshotSet> {
    let k = snap.len();
    if k < 6 {
        return Err(Error::Invalid(format!(
            "need at least 6 snapshots for derivative estimates, got {k}"
        )));
    }
    let dt = snap
        .uniform_step()
        .ok_or_else(|| Error::Invalid("derivative estimates need a uniform time grid".into()))?;
    let x = &snap.x;
    let c = 1.0 / (12.0 * dt);
    let mut d = DMatrix::zeros(x.nrows(), k);
    let comb = |d: &mut DMatrix<f64>, col: usize, idx: [usize; 5], w: [f64; 5]| {
        let mut out = d.column_mut(col);
        for (i, wi) in idx.iter().zip(w) {
            out.axpy(wi * c, &x.column(*i), 1.0);
        }
    };
    comb(&mut d, 0, [0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0]);
    comb(&mut d, 1, [0, 1, 2, 3, 4], [-3.0, -10.0, 18.0, -6.0, 1.0]);
    for j in 2..k - 2 {
        comb(
            &mut d,
            j,
            [j - 2, j - 1, j + 1, j + 2, j],
            [1.0, -8.0, 8.0, -1.0, 0.0],
        );
    }
    let l = k - 1;
    comb(
        &mut d,
        l - 1,
        [l, l - 1, l - 2, l - 3, l - 4],
        [3.0, 10.0, -18.0, 6.0, -1.0],
    );
    comb(
        &mut d,
        l,
        [l, l - 1, l - 2, l - 3, l - 4],
        [25.0, -48.0, 36.0, -16.0, 3.0],
    );
    let mut out = snap.clone();
    out.xdot = Some(d);
    Ok(out)
}
