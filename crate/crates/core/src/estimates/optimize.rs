use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{analytic_diagnostics, AnalyticDiagnostics, RadiusProblem};
use crate::densela::LyapunovCertificate;
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub restarts: usize,
    /// Box bound `|mu_k| <= mu_bound`.
    pub mu_bound: f64,
    /// Relative change of `mu` over the stall window below which to stop.
    pub tol_x: f64,
    /// Relative decrease of `alpha` over the stall window below which to stop.
    pub tol_fun: f64,
    pub max_iter: usize,
    /// Number of iterations the two stall tests look back over.
    pub window: usize,
    /// Stored correction pairs in the limited-memory update.
    pub memory: usize,
    pub seed: u64,
    /// Sharpness levels `t` of the log-sum-exp warm-up phases, each run with
    /// `beta = t / alpha` before the final nonsmooth phase. Empty disables
    /// smoothing.
    pub smoothing: Vec<f64>,
    /// Run one extra start from `mu = 0` before the random restarts.
    pub zero_start: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            mu_bound: 1e4,
            tol_x: 0.1,
            tol_fun: 1e-3,
            max_iter: 1000,
            window: 10,
            memory: 20,
            seed: 0,
            smoothing: vec![10.0, 100.0, 1000.0],
            zero_start: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartSummary {
    pub alpha: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: String,
}

/// Analytic and optimized radius for one system/certificate pair.
///
/// The certified set is `{v(x) < rho_star^2}` (strict).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub n: usize,
    #[serde(with = "crate::io::nonfinite")]
    pub rho_analytic: f64,
    #[serde(with = "crate::io::nonfinite")]
    pub rho_star: f64,
    pub alpha_star: f64,
    pub mu_star: Vec<f64>,
    pub restarts_used: usize,
    /// `alpha` per iteration of the best restart.
    pub objective_history: Vec<f64>,
    pub alpha_at_zero: f64,
    pub restarts: Vec<RestartSummary>,
    pub analytic: AnalyticDiagnostics,
    /// `Q_f` handled through a pseudo-inverse factor.
    pub qf_factored: bool,
    pub qf_rank: usize,
    pub wall_ms: u64,
    pub certificate: LyapunovCertificate,
}

impl StabilityEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub const CSV_HEADER: &'static str = "model,n,rho_analytic,rho_star,alpha_star,wall_ms";

    pub fn csv_record(&self, model: &str) -> String {
        format!(
            "{model},{},{:e},{:e},{:e},{}",
            self.n, self.rho_analytic, self.rho_star, self.alpha_star, self.wall_ms
        )
    }
}

struct Evaluator<'a> {
    problem: &'a RadiusProblem,
    bound: f64,
    evaluations: usize,
    /// Best exact `alpha` seen at any evaluated point.
    best: (f64, DVector<f64>),
    /// Smoothing parameter of the current phase; `None` is the exact objective.
    beta: Option<f64>,
}

impl Evaluator<'_> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluations += 1;
        let (f, g, alpha) = match self.beta {
            Some(beta) => self.problem.smoothed_objective(x, beta),
            None => {
                let (f, g) = self.problem.objective(x);
                (f, g, f)
            }
        };
        if alpha < self.best.0 {
            self.best = (alpha, x.clone());
        }
        (f, g)
    }

    fn project(&self, x: DVector<f64>) -> DVector<f64> {
        x.map(|v| v.clamp(-self.bound, self.bound))
    }
}

struct Memory {
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    cap: usize,
}

impl Memory {
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy <= 1e-12 * s.norm() * y.norm() || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion for `-H g`.
    fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            q *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }
}

enum LineSearch {
    Ok {
        x: DVector<f64>,
        f: f64,
        g: DVector<f64>,
    },
    /// Only a decrease (no curvature condition) was found.
    Descent {
        x: DVector<f64>,
        f: f64,
        g: DVector<f64>,
    },
    Failed,
}

/// Weak Wolfe bracketing (bisection / doubling), suitable for nonsmooth
/// objectives.
fn weak_wolfe(
    ev: &mut Evaluator,
    x: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
) -> LineSearch {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let slope = g.dot(d);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut t = 1.0;
    let mut descent: Option<(DVector<f64>, f64, DVector<f64>)> = None;
    for _ in 0..60 {
        let xt = ev.project(x + d * t);
        let (ft, gt) = ev.eval(&xt);
        if !ft.is_finite() || ft >= f + C1 * t * slope {
            hi = t;
        } else if gt.dot(d) <= C2 * slope {
            lo = t;
            descent = Some((xt, ft, gt));
        } else {
            return LineSearch::Ok {
                x: xt,
                f: ft,
                g: gt,
            };
        }
        t = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * lo
        };
        if hi.is_finite() && hi - lo < 1e-14 * (1.0 + lo) {
            break;
        }
    }
    match descent {
        Some((x, f, g)) => LineSearch::Descent { x, f, g },
        None => LineSearch::Failed,
    }
}

/// Short projected subgradient steps, used when the quasi-Newton direction
/// yields no decrease.
fn subgradient_steps(
    ev: &mut Evaluator,
    x: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
) -> Option<(DVector<f64>, f64, DVector<f64>)> {
    let gn = g.norm();
    if gn == 0.0 {
        return None;
    }
    let mut step = 0.1 * f / gn;
    for _ in 0..30 {
        let xt = ev.project(x - g * (step / gn));
        let (ft, gt) = ev.eval(&xt);
        if ft < f {
            return Some((xt, ft, gt));
        }
        step *= 0.5;
    }
    None
}

struct RestartResult {
    x: DVector<f64>,
    f: f64,
    history: Vec<f64>,
    summary: RestartSummary,
}

struct Phase {
    x: DVector<f64>,
    iterations: usize,
    stop: String,
}

/// Limited-memory BFGS on the evaluator's current objective with the
/// windowed TolFun / TolX stall tests.
fn lbfgs_phase(
    ev: &mut Evaluator,
    x0: DVector<f64>,
    opts: &OptimizeOptions,
    history: &mut Vec<f64>,
) -> Phase {
    let mut x = ev.project(x0);
    let (mut f, mut g) = ev.eval(&x);
    let mut values = vec![f];
    let mut recent: VecDeque<DVector<f64>> = VecDeque::from([x.clone()]);
    let mut memory = Memory {
        pairs: VecDeque::new(),
        cap: opts.memory.max(1),
    };
    let mut stop = String::from("max_iter");
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        if g.norm() == 0.0 || f == 0.0 {
            stop = "zero_subgradient".into();
            break;
        }
        let mut d = memory.direction(&g);
        if !(g.dot(&d) < 0.0) {
            memory.pairs.clear();
            d = -&g;
        }
        let next = match weak_wolfe(ev, &x, f, &g, &d) {
            LineSearch::Ok { x, f, g } => Some((x, f, g, true)),
            LineSearch::Descent { x, f, g } => Some((x, f, g, false)),
            LineSearch::Failed => {
                memory.pairs.clear();
                subgradient_steps(ev, &x, f, &g).map(|(x, f, g)| (x, f, g, false))
            }
        };
        let Some((xn, fn_, gn, curvature)) = next else {
            stop = "no_descent".into();
            break;
        };
        if curvature {
            memory.push(&xn - &x, &gn - &g);
        }
        x = xn;
        f = fn_;
        g = gn;
        values.push(f);
        history.push(ev.best.0);
        recent.push_back(x.clone());
        if recent.len() > opts.window + 1 {
            recent.pop_front();
        }
        if values.len() > opts.window {
            let past = values[values.len() - 1 - opts.window];
            if past - f <= opts.tol_fun * f.abs() {
                stop = "tol_fun".into();
                break;
            }
            let moved = (&x - &recent[0]).norm();
            if moved <= opts.tol_x * x.norm().max(1.0) {
                stop = "tol_x".into();
                break;
            }
        }
    }
    Phase {
        x,
        iterations,
        stop,
    }
}

fn run_restart(problem: &RadiusProblem, x0: DVector<f64>, opts: &OptimizeOptions) -> RestartResult {
    let mut ev = Evaluator {
        problem,
        bound: opts.mu_bound,
        evaluations: 0,
        best: (f64::INFINITY, x0.clone()),
        beta: None,
    };
    let mut history = Vec::new();
    let mut x = x0;
    let mut iterations = 0;
    for &level in &opts.smoothing {
        let alpha = problem.alpha(&ev.project(x.clone()));
        if !(alpha > 0.0 && alpha.is_finite()) {
            break;
        }
        ev.beta = Some(level / alpha);
        let phase = lbfgs_phase(&mut ev, x, opts, &mut history);
        iterations += phase.iterations;
        x = phase.x;
    }
    ev.beta = None;
    let phase = lbfgs_phase(&mut ev, x, opts, &mut history);
    iterations += phase.iterations;
    let (best_f, best_x) = ev.best.clone();
    RestartResult {
        x: best_x,
        f: best_f,
        history,
        summary: RestartSummary {
            alpha: best_f,
            iterations,
            evaluations: ev.evaluations,
            stop: phase.stop,
        },
    }
}

/// Minimize `alpha(mu) = ||J(mu)||_2` over the box `|mu_k| <= mu_bound` from
/// several random starting points and report `rho_star = 1 / alpha_star`
/// together with the analytic radius of the same certificate.
pub fn optimize_radius(
    sys: &QBSystem,
    cert: &LyapunovCertificate,
    opts: &OptimizeOptions,
) -> Result<StabilityEstimate> {
    let start = Instant::now();
    let analytic = analytic_diagnostics(sys, cert)?;
    let problem = RadiusProblem::new(sys, cert)?;
    let dim = problem.parametrization().dim();
    let zero = DVector::zeros(dim);
    let alpha_at_zero = problem.alpha(&zero);
    let mut estimate = StabilityEstimate {
        n: sys.n(),
        rho_analytic: analytic.rho,
        rho_star: f64::INFINITY,
        alpha_star: 0.0,
        mu_star: vec![0.0; dim],
        restarts_used: 0,
        objective_history: vec![alpha_at_zero],
        alpha_at_zero,
        restarts: Vec::new(),
        analytic,
        qf_factored: problem.qf_factored(),
        qf_rank: problem.factor_rank(),
        wall_ms: 0,
        certificate: cert.clone(),
    };
    if sys.h().is_zero() || alpha_at_zero == 0.0 {
        estimate.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(estimate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<RestartResult> = None;
    let mut starts = Vec::new();
    if opts.zero_start {
        starts.push(zero.clone());
    }
    for _ in 0..opts.restarts.max(1) {
        starts.push(DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0)));
    }
    for x0 in starts {
        let result = run_restart(&problem, x0, opts);
        estimate.restarts.push(result.summary.clone());
        if best.as_ref().map_or(true, |b| result.f < b.f) {
            best = Some(result);
        }
    }
    let mut best = best.expect("at least one restart");
    if !(best.f <= alpha_at_zero) && alpha_at_zero.is_finite() {
        best.x = zero;
        best.f = alpha_at_zero;
    }
    if !best.f.is_finite() {
        return Err(Error::Invalid(
            "all optimizer restarts produced non-finite objectives".into(),
        ));
    }
    estimate.restarts_used = estimate.restarts.len();
    estimate.alpha_star = best.f;
    estimate.rho_star = if best.f > 0.0 {
        1.0 / best.f
    } else {
        f64::INFINITY
    };
    estimate.mu_star = best.x.iter().copied().collect();
    estimate.objective_history = best.history;
    estimate.wall_ms = start.elapsed().as_millis() as u64;
    Ok(estimate)
}
