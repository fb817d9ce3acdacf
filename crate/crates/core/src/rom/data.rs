//! Snapshot generation for the POD and operator-inference pipelines.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{build_burgers_fd, fhn_input, BurgersFdConfig};
use crate::qbsys::QBSystem;
use crate::sim::{integrate, IntegrateOptions, OutputMode, SnapshotSet};

/// Scalar training input: independent uniform draws in `[lo, hi]` at every
/// sample time, joined linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomInputPlan {
    pub seed: u64,
    pub t_f: f64,
    pub dt: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for RandomInputPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            t_f: 1.0,
            dt: 1e-4,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl RandomInputPlan {
    pub fn times(&self) -> Vec<f64> {
        let k = (self.t_f / self.dt).round() as usize;
        (0..=k).map(|j| j as f64 * self.dt).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.times()
            .iter()
            .map(|_| rng.random_range(self.lo..=self.hi))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BurgersFdData {
    pub system: QBSystem,
    pub snapshots: SnapshotSet,
}

/// Simulate the finite-difference Burgers model from rest under the random
/// boundary input and record states and inputs on the plan grid.
pub fn burgers_fd_training_data(
    cfg: &BurgersFdConfig,
    plan: &RandomInputPlan,
) -> Result<BurgersFdData> {
    let system = build_burgers_fd(cfg)?;
    let times = plan.times();
    let values = plan.values();
    let k = times.len();
    let dt = plan.dt;
    let input = |t: f64| {
        let pos = ((t / dt).floor() as usize).min(k - 2);
        let w = ((t - times[pos]) / dt).clamp(0.0, 1.0);
        DVector::from_element(1, values[pos] * (1.0 - w) + values[pos + 1] * w)
    };
    let opts = IntegrateOptions {
        output: OutputMode::Every(dt),
        breakpoints: times[1..k - 1].to_vec(),
        ..Default::default()
    };
    let traj = integrate(
        &system,
        &DVector::zeros(cfg.n),
        Some(&input),
        times[k - 1],
        &opts,
    )?;
    let u = DMatrix::from_row_slice(1, k, &values);
    let snapshots = SnapshotSet::new(times, traj.x, Some(u))?;
    Ok(BurgersFdData { system, snapshots })
}

/// Simulation and sampling plan for the lifted FitzHugh-Nagumo model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FhnSnapshotPlan {
    pub t_f: f64,
    pub every: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for FhnSnapshotPlan {
    fn default() -> Self {
        Self {
            t_f: 12.0,
            every: 0.1,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Snapshots `t = every, 2 every, ..., t_f` (the zero initial state is
/// dropped) of the lifted model driven by the boundary current.
pub fn fhn_snapshots(sys: &QBSystem, plan: &FhnSnapshotPlan) -> Result<SnapshotSet> {
    let opts = IntegrateOptions {
        rtol: plan.rtol,
        atol: plan.atol,
        output: OutputMode::Every(plan.every),
        ..Default::default()
    };
    let input = |t: f64| fhn_input(t);
    let traj = integrate(sys, &DVector::zeros(sys.n()), Some(&input), plan.t_f, &opts)?;
    let k = traj.t.len();
    let t = traj.t[1..].to_vec();
    let x = traj.x.columns(1, k - 1).into_owned();
    let u = DMatrix::from_fn(2, k - 1, |r, c| fhn_input(t[c])[r]);
    SnapshotSet::new(t, x, Some(u))
}
