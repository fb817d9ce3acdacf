//! Time integration of QB systems.
//!
//! The integrator is TR-BDF2 (a trapezoidal stage to `t + gamma h` followed by
//! BDF2 to `t + h`, `gamma = 2 - sqrt 2`), with the embedded third-order error
//! estimate filtered through the Newton matrix. Both stages share the Newton
//! matrix `E - d h J` with `d = gamma / 2`.

mod snapshots;

pub use snapshots::{estimate_derivatives, sample_snapshots, SnapshotSet};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qbsys::QBSystem;

/// Time-dependent input `u(t)`.
pub type InputSignal<'a> = &'a dyn Fn(f64) -> DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OutputMode {
    /// Every accepted step (with derivatives, for dense output later).
    Steps,
    /// Uniform grid `t0 + k dt`, interpolated during integration.
    Every(f64),
    /// Only the initial and the terminal state.
    Final,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    /// Declare divergence once `||x||` exceeds this.
    pub divergence: f64,
    /// Stop as converged once `||x||` drops below this.
    pub convergence_ball: Option<f64>,
    pub output: OutputMode,
    pub max_steps: usize,
    /// Times the integrator must step onto exactly (input discontinuities).
    pub breakpoints: Vec<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            h_max: f64::INFINITY,
            divergence: 1e8,
            convergence_ball: None,
            output: OutputMode::Steps,
            max_steps: 1_000_000,
            breakpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    ConvergedToZero,
    Diverged,
    HorizonReached,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// States as columns.
    pub x: DMatrix<f64>,
    /// `x'` at the stored points (only for [`OutputMode::Steps`]).
    pub xdot: Option<DMatrix<f64>>,
    pub status: TerminalStatus,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn final_state(&self) -> DVector<f64> {
        self.x.column(self.x.ncols() - 1).into_owned()
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().expect("trajectory has at least one point")
    }

    /// CSV with header `t,x1,...,xn`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.x.nrows() {
            s.push_str(&format!(",x{}", i + 1));
        }
        s.push('\n');
        for (k, t) in self.t.iter().enumerate() {
            s.push_str(&format!("{t:e}"));
            for v in self.x.column(k).iter() {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const D: f64 = GAMMA / 2.0;
const W: f64 = std::f64::consts::SQRT_2 / 4.0;
const E1: f64 = (4.0 * W - 1.0) / 3.0;
const E2: f64 = -1.0 / 3.0;
const E3: f64 = 2.0 * D / 3.0;
/// Local errors are held to `1 / LOCAL_SAFETY` of the requested tolerance so
/// that accumulated global errors stay near the requested level.
const LOCAL_SAFETY: f64 = 20.0;

struct Recorder {
    mode: OutputMode,
    t0: f64,
    t: Vec<f64>,
    x: Vec<DVector<f64>>,
    xdot: Vec<DVector<f64>>,
    next_index: usize,
}

impl Recorder {
    fn new(mode: OutputMode, t0: f64, x0: &DVector<f64>, f0: &DVector<f64>) -> Self {
        Self {
            mode,
            t0,
            t: vec![t0],
            x: vec![x0.clone()],
            xdot: vec![f0.clone()],
            next_index: 1,
        }
    }

    /// Record output for an accepted step `[t, t + h]`.
    fn step(
        &mut self,
        t: f64,
        h: f64,
        y0: &DVector<f64>,
        f0: &DVector<f64>,
        y1: &DVector<f64>,
        f1: &DVector<f64>,
    ) {
        match self.mode {
            OutputMode::Steps => {
                self.t.push(t + h);
                self.x.push(y1.clone());
                self.xdot.push(f1.clone());
            }
            OutputMode::Every(dt) => loop {
                let tk = self.t0 + self.next_index as f64 * dt;
                let end = t + h;
                if tk > end + 1e-12 * dt.max(end.abs()) {
                    break;
                }
                let theta = ((tk - t) / h).clamp(0.0, 1.0);
                self.t.push(tk);
                self.x.push(hermite(theta, h, y0, f0, y1, f1));
                self.next_index += 1;
            },
            OutputMode::Final => {}
        }
    }

    fn finish(
        mut self,
        t: f64,
        y: &DVector<f64>,
        f: &DVector<f64>,
    ) -> (Vec<f64>, DMatrix<f64>, Option<DMatrix<f64>>) {
        if self.mode == OutputMode::Final {
            self.t.push(t);
            self.x.push(y.clone());
            self.xdot.push(f.clone());
        }
        let x = DMatrix::from_columns(&self.x);
        let xdot =
            (!matches!(self.mode, OutputMode::Every(_))).then(|| DMatrix::from_columns(&self.xdot));
        (self.t, x, xdot)
    }
}

/// Cubic Hermite interpolant on `[0, 1]`.
pub(crate) fn hermite(
    theta: f64,
    h: f64,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    y1: &DVector<f64>,
    f1: &DVector<f64>,
) -> DVector<f64> {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
}

struct Stepper<'a> {
    sys: &'a QBSystem,
    input: Option<InputSignal<'a>>,
    opts: &'a IntegrateOptions,
    stats: IntegratorStats,
    jac: Option<DMatrix<f64>>,
    /// The Jacobian was evaluated at the start of the current step.
    jac_fresh: bool,
    lu: Option<(f64, LU<f64, Dyn, Dyn>)>,
}

enum StepOutcome {
    Accepted {
        y1: DVector<f64>,
        force1: DVector<f64>,
        err: f64,
    },
    Rejected {
        err: f64,
    },
    NewtonFailed,
}

impl Stepper<'_> {
    fn u(&self, t: f64) -> Option<DVector<f64>> {
        self.input.map(|f| f(t))
    }

    fn force(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let u = self.u(t);
        self.sys.force(x, u.as_ref())
    }

    fn wrms(&self, v: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>) -> f64 {
        let n = v.len().max(1) as f64;
        let s: f64 = v
            .iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| {
                let sc = self.opts.atol + self.opts.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    fn ensure_lu(&mut self, t: f64, y: &DVector<f64>, h: f64) {
        if self.jac.is_none() {
            let u = self.u(t);
            self.jac = Some(self.sys.force_jacobian(y, u.as_ref()));
            self.stats.jacobians += 1;
            self.jac_fresh = true;
            self.lu = None;
        }
        if self.lu.as_ref().map_or(true, |(hl, _)| *hl != h) {
            let m = self.sys.e() - self.jac.as_ref().expect("jacobian") * (D * h);
            self.lu = Some((h, m.lu()));
            self.stats.factorizations += 1;
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.as_ref().and_then(|(_, lu)| lu.solve(rhs))
    }

    /// Simplified Newton on `residual(x, F(x)) = 0` with the factored `E - d h J`.
    fn newton<G>(
        &mut self,
        t_stage: f64,
        mut x: DVector<f64>,
        residual: G,
        y: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)>
    where
        G: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    {
        let mut prev_norm = f64::INFINITY;
        for _ in 0..8 {
            self.stats.newton_iterations += 1;
            let fx = self.force(&x, t_stage);
            let r = residual(&x, &fx);
            let delta = self.solve(&(-r))?;
            if delta.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let norm = self.wrms(&delta, y, &x);
            x += &delta;
            if norm <= 1e-3 {
                let fx = self.force(&x, t_stage);
                return Some((x, fx));
            }
            let rate = norm / prev_norm;
            if rate > 0.9 {
                return None;
            }
            if prev_norm.is_finite() && rate / (1.0 - rate) * norm <= 1e-2 {
                let fx = self.force(&x, t_stage);
                return Some((x, fx));
            }
            prev_norm = norm;
        }
        None
    }

    fn attempt(
        &mut self,
        t: f64,
        h: f64,
        y: &DVector<f64>,
        force0: &DVector<f64>,
        f0: &DVector<f64>,
    ) -> Result<StepOutcome> {
        self.ensure_lu(t, y, h);
        let sys = self.sys;
        let e = sys.e();
        // trapezoidal stage
        let z0 = y + f0 * (GAMMA * h);
        let base1 = force0 * (D * h);
        let stage1 = self.newton(
            t + GAMMA * h,
            z0,
            |z, fz| e * (z - y) - &base1 - fz * (D * h),
            y,
        );
        let Some((z, force_z)) = stage1 else {
            return Ok(StepOutcome::NewtonFailed);
        };
        // BDF2 stage
        let y10 = y + (&z - y) / GAMMA;
        let base2 = (force0 + &force_z) * (W * h);
        let stage2 = self.newton(t + h, y10, |x, fx| e * (x - y) - &base2 - fx * (D * h), y);
        let Some((y1, force1)) = stage2 else {
            return Ok(StepOutcome::NewtonFailed);
        };
        let est = (force0 * E1 + &force_z * E2 + &force1 * E3) * h;
        let err_vec = self
            .solve(&est)
            .unwrap_or_else(|| DVector::from_element(y.len(), f64::INFINITY));
        let err = LOCAL_SAFETY * self.wrms(&err_vec, y, &y1);
        if err <= 1.0 {
            Ok(StepOutcome::Accepted { y1, force1, err })
        } else {
            Ok(StepOutcome::Rejected { err })
        }
    }
}

/// Integrate `E x' = A x + H (x (x) x) + sum_i N_i x u_i + B u` from `x0` at
/// `t = 0` to `t_f`.
///
/// Divergence (norm above the ceiling or non-finite state) and convergence
/// (norm inside the optional ball) end the run early with the matching
/// status. Newton failure at the minimum step size is an error carrying the
/// time stamp.
pub fn integrate(
    sys: &QBSystem,
    x0: &DVector<f64>,
    input: Option<InputSignal>,
    t_f: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("initial state is not finite".into()));
    }
    if !(t_f > 0.0) {
        return Err(Error::Invalid(format!(
            "final time must be positive, got {t_f}"
        )));
    }
    if let Some(u) = input {
        let u0 = u(0.0);
        if u0.len() != sys.m() {
            return Err(Error::Dimension(format!(
                "input has length {}, expected {}",
                u0.len(),
                sys.m()
            )));
        }
    }
    if let OutputMode::Every(dt) = opts.output {
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!(
                "output interval must be positive, got {dt}"
            )));
        }
    }
    let mut stepper = Stepper {
        sys,
        input,
        opts,
        stats: IntegratorStats::default(),
        jac: None,
        jac_fresh: false,
        lu: None,
    };
    let mut t = 0.0;
    let mut y = x0.clone();
    let mut force0 = stepper.force(&y, t);
    let mut f0 = sys.solve_mass(&force0)?;
    let mut rec = Recorder::new(opts.output, t, &y, &f0);
    let mut breakpoints: Vec<f64> = opts
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < t_f)
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.push(t_f);
    let mut next_bp = 0;

    let h_min_rel = 16.0 * f64::EPSILON;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let d0 = stepper.wrms(&y, &y, &y);
            let d1 = stepper.wrms(&f0, &y, &y);
            if d0 < 1e-5 || d1 < 1e-5 {
                1e-6 * t_f.max(1e-3)
            } else {
                0.01 * d0 / d1
            }
        }
    }
    .min(opts.h_max)
    .min(t_f);

    let mut status = TerminalStatus::HorizonReached;
    let norm0 = y.norm();
    if opts.convergence_ball.is_some_and(|r| norm0 <= r) {
        status = TerminalStatus::ConvergedToZero;
    }
    while status == TerminalStatus::HorizonReached && t < t_f {
        if stepper.stats.steps >= opts.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step limit {} reached", opts.max_steps),
            });
        }
        let target = breakpoints[next_bp];
        let mut h_try = h;
        let remaining = target - t;
        if h_try >= remaining || remaining - h_try < h_min_rel * target.abs().max(1.0) * 4.0 {
            h_try = remaining;
        } else if h_try > 0.5 * remaining && h_try < remaining {
            // split the remaining interval evenly rather than leaving a sliver
            h_try = 0.5 * remaining;
        }
        let h_min = h_min_rel * t.abs().max(1.0);
        if h_try < h_min {
            return Err(Error::Integration {
                t,
                reason: format!("step size {h_try:e} below minimum"),
            });
        }
        match stepper.attempt(t, h_try, &y, &force0, &f0)? {
            StepOutcome::Accepted { y1, force1, err } => {
                stepper.stats.steps += 1;
                stepper.jac_fresh = false;
                let f1 = sys.solve_mass(&force1)?;
                rec.step(t, h_try, &y, &f0, &y1, &f1);
                let t_new = if h_try == remaining {
                    target
                } else {
                    t + h_try
                };
                t = t_new;
                y = y1;
                force0 = force1;
                f0 = f1;
                if t >= target && next_bp + 1 < breakpoints.len() {
                    next_bp += 1;
                    stepper.jac = None;
                }
                let norm = y.norm();
                if !norm.is_finite() || norm > opts.divergence {
                    status = TerminalStatus::Diverged;
                } else if opts.convergence_ball.is_some_and(|r| norm <= r) {
                    status = TerminalStatus::ConvergedToZero;
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                };
                // keep h (and the factorization) unless the change is worthwhile
                if factor > 1.2 || factor < 1.0 {
                    h = (h_try * factor).min(opts.h_max);
                    stepper.jac = None;
                } else {
                    h = h_try;
                }
            }
            StepOutcome::Rejected { err } => {
                stepper.stats.rejected += 1;
                let factor = (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 0.9);
                h = h_try * factor;
                stepper.jac = None;
            }
            StepOutcome::NewtonFailed => {
                stepper.stats.rejected += 1;
                let norm = y.norm();
                if !norm.is_finite() || norm > opts.divergence {
                    status = TerminalStatus::Diverged;
                    break;
                }
                if !stepper.jac_fresh {
                    // retry with a current Jacobian before shrinking the step
                    stepper.jac = None;
                    h = h_try;
                } else {
                    h = h_try * 0.25;
                }
            }
        }
    }
    let (tv, x, xdot) = rec.finish(t, &y, &f0);
    Ok(Trajectory {
        t: tv,
        x,
        xdot,
        status,
        stats: stepper.stats,
    })
}
