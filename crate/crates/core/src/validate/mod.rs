//! Monte-Carlo checks that certified sublevel sets lie inside the domain of
//! attraction, and probes of how far beyond the certified radius divergence
//! first shows up.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densela::{self, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::qbsys::QBSystem;
use crate::sim::{integrate, IntegrateOptions, OutputMode, TerminalStatus};


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateOptions {
    pub count: usize,
    /// Samples are drawn on the shell `v(x) = (factor * rho)^2`.
    pub factor: f64,
    pub seed: u64,
    /// Fixed horizon; `None` integrates in growing chunks until every sample
    /// converges or diverges (up to `max_horizon`).
    pub t_f: Option<f64>,
    pub max_horizon: f64,
    /// Convergence when `||x|| <= convergence_ball * min(1, ||x0||)`.
    pub convergence_ball: f64,
    pub divergence: f64,
    pub rtol: f64,
    /// Absolute tolerance relative to `||x0||`.
    pub atol: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            count: 200,
            factor: 0.99,
            seed: 0,
            t_f: None,
            max_horizon: 1e4,
            convergence_ball: 1e-6,
            divergence: 1e8,
            rtol: 1e-4,
            atol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleOutcome {
    Converged,
    Diverged,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x0: Vec<f64>,
    pub outcome: SampleOutcome,
    pub t_end: f64,
    /// `max_t v(x(t)) / v(x0)` over the stored steps.
    pub v_growth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rho_tested: f64,
    pub samples: usize,
    pub converged: usize,
    pub diverged: usize,
    pub undecided: usize,
    pub max_v_growth: f64,
    pub records: Vec<SampleRecord>,
}

impl ValidationReport {
    pub fn contained(&self) -> bool {
        self.diverged == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "rho_tested,samples,converged,diverged,undecided,max_v_growth";

    pub fn csv_record(&self) -> String {
        format!(
            "{:e},{},{},{},{},{:e}",
            self.rho_tested, self.samples, self.converged, self.diverged, self.undecided, self.max_v_growth
        )
    }
}

/// `E^T P E` and its Cholesky factor `L` (`E^T P E = L L^T`).
fn level_factor(cert: &LyapunovCertificate, e: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = cert.dim();
    if e.shape() != (n, n) {
        return Err(Error::Dimension(format!("E is {:?}, certificate has n = {n}", e.shape())));
    }
    let m = densela::sym(&(e.transpose() * &cert.p * e));
    let l = densela::cholesky(&m)
        .map_err(|_| Error::InvalidCertificate("E^T P E is not positive definite".into()))?;
    Ok((m, l))
}

/// `count` points with `v(x) = x^T E^T P E x = rho^2`, directions uniform in
/// the factored coordinates.
pub fn sample_ellipsoid_shell(
    cert: &LyapunovCertificate,
    e: &DMatrix<f64>,
    rho: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<f64>>> {
    let (_, l) = level_factor(cert, e)?;
    let n = l.nrows();
    let lt = l.transpose();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm: f64 = z.norm();
        if norm == 0.0 {
            continue;
        }
        let y = z * (rho / norm);
        // L^T x = y gives x^T L L^T x = rho^2
        let x = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::InvalidCertificate("singular level-set factor".into()))?;
        out.push(x);
    }
    Ok(out)
}

fn level_value(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (m * x).dot(x)
}

fn run_sample(sys: &QBSystem, m: &DMatrix<f64>, x0: &DVector<f64>, horizon: f64, opts: &ValidateOptions) -> SampleRecord {
    let v0 = level_value(m, x0);
    let ball = opts.convergence_ball * x0.norm().min(1.0);
    let iopts = IntegrateOptions {
        rtol: opts.rtol,
        atol: opts.atol * x0.norm().max(f64::MIN_POSITIVE),
        divergence: opts.divergence,
        convergence_ball: Some(ball),
        output: OutputMode::Steps,
        ..Default::default()
    };
    let mut record = SampleRecord {
        x0: x0.iter().copied().collect(),
        outcome: SampleOutcome::Undecided,
        t_end: 0.0,
        v_growth: 1.0,
        note: None,
    };
    let mut x = x0.clone();
    let mut chunk = horizon;
    let limit = opts.t_f.unwrap_or(opts.max_horizon);
    loop {
        let span = chunk.min(limit - record.t_end);
        let traj = match integrate(sys, &x, None, span, &iopts) {
            Ok(traj) => traj,
            Err(e) => {
                record.note = Some(e.to_string());
                return record;
            }
        };
        for c in traj.x.column_iter() {
            let v = level_value(m, &c.into_owned());
            if v.is_finite() && v0 > 0.0 {
                record.v_growth = record.v_growth.max(v / v0);
            }
        }
        record.t_end += traj.final_time();
        match traj.status {
            TerminalStatus::ConvergedToZero => {
                record.outcome = SampleOutcome::Converged;
                return record;
            }
            TerminalStatus::Diverged => {
                record.outcome = SampleOutcome::Diverged;
                return record;
            }
            TerminalStatus::HorizonReached => {
                if opts.t_f.is_some() || record.t_end >= limit * (1.0 - 1e-12) {
                    return record;
                }
                x = traj.final_state();
                chunk *= 2.0;
            }
        }
    }
}

/// Initial chunk length: ten time constants of the slowest linear mode.
fn initial_horizon(sys: &QBSystem, opts: &ValidateOptions) -> f64 {
    if let Some(t) = opts.t_f {
        return t;
    }
    let decay = sys
        .linear_part()
        .and_then(|a| densela::eigenvalues(&a))
        .map(|ev| ev.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min))
        .unwrap_or(1.0);
    if decay > 0.0 && decay.is_finite() {
        (10.0 / decay).min(opts.max_horizon)
    } else {
        1.0_f64.min(opts.max_horizon)
    }
}

/// Integrate the autonomous system (`u = 0`) from `count` shell samples at
/// `v(x) = (factor * rho)^2` and classify each run.
pub fn validate_estimate(
    sys: &QBSystem,
    cert: &LyapunovCertificate,
    rho: f64,
    opts: &ValidateOptions,
) -> Result<ValidationReport> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Invalid(format!("validation radius must be positive and finite, got {rho}")));
    }
    if !(opts.factor > 0.0) {
        return Err(Error::Invalid(format!("radius factor must be positive, got {}", opts.factor)));
    }
    let (m, _) = level_factor(cert, sys.e())?;
    let tested = opts.factor * rho;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = sample_ellipsoid_shell(cert, sys.e(), tested, opts.count, &mut rng)?;
    let horizon = initial_horizon(sys, opts);
    let records: Vec<SampleRecord> = points.iter().map(|x0| run_sample(sys, &m, x0, horizon, opts)).collect();
    let count = |o| records.iter().filter(|r| r.outcome == o).count();
    Ok(ValidationReport {
        rho_tested: tested,
        samples: records.len(),
        converged: count(SampleOutcome::Converged),
        diverged: count(SampleOutcome::Diverged),
        undecided: count(SampleOutcome::Undecided),
        max_v_growth: records.iter().map(|r| r.v_growth).fold(1.0, f64::max),
        records,
    })
}

pub const DEFAULT_TIGHTNESS_FACTORS: [f64; 4] = [1.5, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub rho_star: f64,
    pub factors: Vec<f64>,
    pub reports: Vec<ValidationReport>,
    /// Smallest factor whose samples include a divergent run.
    pub first_divergence: Option<f64>,
}

/// [`validate_estimate`] at `rho = f * rho_star` for each factor, sampling
/// exactly on `v(x) = (f * rho_star)^2`.
pub fn probe_tightness(
    sys: &QBSystem,
    cert: &LyapunovCertificate,
    rho_star: f64,
    factors: &[f64],
    opts: &ValidateOptions,
) -> Result<TightnessReport> {
    let mut sorted = factors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let probe = ValidateOptions { factor: 1.0, ..opts.clone() };
    let reports = sorted
        .iter()
        .map(|f| validate_estimate(sys, cert, f * rho_star, &probe))
        .collect::<Result<Vec<_>>>()?;
    let first_divergence = sorted.iter().zip(&reports).find(|(_, r)| r.diverged > 0).map(|(f, _)| *f);
    Ok(TightnessReport { rho_star, factors: sorted, reports, first_divergence })
}
