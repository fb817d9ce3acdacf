//! Model construction and reduction shared by the commands.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};
use qbstab::densela::{self, LyapunovCertificate};
use qbstab::io::{load_model, load_snapshots, read_json, save_snapshots};
use qbstab::models::{
    build_burgers_fd, build_burgers_fem, build_fhn_lifted, random_stable_system, scalar_system,
    BurgersFdConfig, BurgersFemConfig, FhnConfig, FhnMass,
};
use qbstab::qbsys::QBSystem;
use qbstab::rom::{
    burgers_fd_training_data, certificate_for, fhn_snapshots, lqg_balanced_truncation,
    lqg_fom_certificate, lyapunov_identity_certificate, operator_inference, pod_galerkin,
    riccati_implied_certificate, CertificateKind, FhnSnapshotPlan, OpInfOptions, RandomInputPlan,
    RomArtifact, RomFile, RomMethod,
};
use qbstab::sim::SnapshotSet;
use qbstab::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    BurgersFem,
    BurgersFd,
    Fhn,
    /// `x' = -x + h x^2`.
    Scalar,
    /// Random stable autonomous system of dimension `--N`.
    Random,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BurgersFem => "burgers-fem",
            Self::BurgersFd => "burgers-fd",
            Self::Fhn => "fhn",
            Self::Scalar => "scalar",
            Self::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RomKind {
    Lqgbt,
    Pod,
    Opinf,
}

impl From<RomKind> for RomMethod {
    fn from(k: RomKind) -> Self {
        match k {
            RomKind::Lqgbt => RomMethod::Lqgbt,
            RomKind::Pod => RomMethod::Pod,
            RomKind::Opinf => RomMethod::Opinf,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct ModelOverrides {
    /// Dimension override (grid points per variable for fhn).
    #[arg(long = "N", value_name = "N")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Quadratic coefficient of the scalar model.
    #[arg(long)]
    pub h: Option<f64>,
    /// Quadratic entry bound of the random model.
    #[arg(long)]
    pub strength: Option<f64>,
    /// FitzHugh-Nagumo mass convention: voltage-block or uniform.
    #[arg(long)]
    pub fhn_mass: Option<String>,
    /// JSON file with the model configuration; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl ModelOverrides {
    fn config<T: Default + for<'de> serde::Deserialize<'de>>(&self) -> Result<T> {
        match &self.config {
            Some(path) => read_json(path),
            None => Ok(T::default()),
        }
    }

    /// Suffix distinguishing overridden builds in file names.
    fn suffix(&self) -> String {
        let mut s = String::new();
        if let Some(n) = self.dim {
            s += &format!("-N{n}");
        }
        if let Some(e) = self.epsilon {
            s += &format!("-eps{e}");
        }
        if let Some(h) = self.h {
            s += &format!("-h{h}");
        }
        if let Some(v) = self.strength {
            s += &format!("-s{v}");
        }
        if let Some(m) = &self.fhn_mass {
            s += &format!("-{m}");
        }
        if let Some(p) = &self.config {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
            s += &format!("-{}", stem.unwrap_or_default());
        }
        s
    }
}

/// A model built by name, with the configuration it was built from.
pub struct BuiltModel {
    pub name: ModelName,
    pub system: QBSystem,
    pub x0: Option<DVector<f64>>,
    pub tag: String,
    fd: Option<BurgersFdConfig>,
    fhn: Option<FhnConfig>,
}

pub fn build_model(name: ModelName, ov: &ModelOverrides, seed: u64) -> Result<BuiltModel> {
    let tag = format!("{}{}", name.as_str(), ov.suffix());
    let mut out = BuiltModel {
        name,
        system: scalar_system(0.5),
        x0: None,
        tag,
        fd: None,
        fhn: None,
    };
    match name {
        ModelName::BurgersFem => {
            let mut cfg: BurgersFemConfig = ov.config()?;
            if let Some(n) = ov.dim {
                cfg.n = n;
            }
            if let Some(e) = ov.epsilon {
                cfg.epsilon = e;
            }
            let (sys, x0) = build_burgers_fem(&cfg)?;
            out.system = sys;
            out.x0 = Some(x0);
        }
        ModelName::BurgersFd => {
            let mut cfg: BurgersFdConfig = ov.config()?;
            if let Some(n) = ov.dim {
                cfg.n = n;
            }
            if let Some(e) = ov.epsilon {
                cfg.epsilon = e;
            }
            out.system = build_burgers_fd(&cfg)?;
            out.fd = Some(cfg);
        }
        ModelName::Fhn => {
            let mut cfg: FhnConfig = ov.config()?;
            if let Some(n) = ov.dim {
                cfg.grid = n;
            }
            if let Some(e) = ov.epsilon {
                cfg.epsilon = e;
            }
            if let Some(m) = &ov.fhn_mass {
                cfg.mass = serde_json::from_value::<FhnMass>(serde_json::Value::String(m.clone()))
                    .map_err(|_| Error::Invalid(format!("unknown fhn mass convention {m:?}")))?;
            }
            out.system = build_fhn_lifted(&cfg)?;
            out.fhn = Some(cfg);
        }
        ModelName::Scalar => {
            let h = ov.h.unwrap_or(0.5);
            if !h.is_finite() {
                return Err(Error::Invalid("h must be finite".into()));
            }
            out.system = scalar_system(h);
        }
        ModelName::Random => {
            let n = ov.dim.unwrap_or(2);
            if n == 0 {
                return Err(Error::Invalid("random model needs N >= 1".into()));
            }
            out.system = random_stable_system(n, seed, ov.strength.unwrap_or(0.5))?;
        }
    }
    Ok(out)
}

/// Full-order system from a model name or a model file.
pub struct Source {
    pub system: QBSystem,
    pub tag: String,
    model: Option<BuiltModel>,
}

impl Source {
    pub fn new(
        model: Option<ModelName>,
        model_file: Option<&Path>,
        ov: &ModelOverrides,
        seed: u64,
    ) -> Result<Self> {
        match (model, model_file) {
            (Some(name), None) => {
                let built = build_model(name, ov, seed)?;
                Ok(Self {
                    system: built.system.clone(),
                    tag: built.tag.clone(),
                    model: Some(built),
                })
            }
            (None, Some(path)) => Ok(Self {
                system: load_model(path)?,
                tag: file_tag(path),
                model: None,
            }),
            (Some(_), Some(_)) => Err(Error::Invalid(
                "give either --model or --model-file, not both".into(),
            )),
            (None, None) => Err(Error::Invalid("one of --model or --model-file is required".into())),
        }
    }
}

pub fn file_tag(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    name.split('.').next().unwrap_or("model").to_string()
}

/// Prepared reduction pipeline; the expensive data generation runs once.
pub struct Reducer {
    method: RomMethod,
    system: QBSystem,
    blocks: Vec<SnapshotSet>,
    /// Left singular vectors and values of the training snapshots (opinf).
    training_svd: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl Reducer {
    pub fn new(source: &Source, rom: RomKind, snapshots: Option<&Path>, out: &Path, seed: u64) -> Result<Self> {
        let method = RomMethod::from(rom);
        let system = source.system.clone();
        let mut reducer = Self {
            method,
            system,
            blocks: Vec::new(),
            training_svd: None,
        };
        if method == RomMethod::Lqgbt {
            return Ok(reducer);
        }
        let snap = match snapshots {
            Some(path) => load_snapshots(path)?,
            None => generate_snapshots(source, out, seed)?,
        };
        if snap.state_dim() != reducer.system.n() {
            return Err(Error::Dimension(format!(
                "snapshots have dimension {}, model has n = {}",
                snap.state_dim(),
                reducer.system.n()
            )));
        }
        let fhn = source.model.as_ref().and_then(|m| m.fhn.as_ref());
        reducer.blocks = match (method, fhn) {
            (RomMethod::Pod, Some(cfg)) => (0..3).map(|b| snap.rows(b * cfg.grid, cfg.grid)).collect(),
            _ => vec![snap],
        };
        if method == RomMethod::Opinf {
            let dec = densela::svd(&reducer.blocks[0].x)?;
            reducer.training_svd = Some((dec.u, dec.s));
        }
        Ok(reducer)
    }

    pub fn method(&self) -> RomMethod {
        self.method
    }

    pub fn reduce(&self, n: usize) -> Result<RomArtifact> {
        if n == 0 {
            return Err(Error::Invalid("reduced order must be positive".into()));
        }
        match self.method {
            RomMethod::Lqgbt => lqg_balanced_truncation(&self.system, n),
            RomMethod::Pod => pod_galerkin(&self.system, &self.blocks, n),
            RomMethod::Opinf => {
                let (u, s) = self.training_svd.as_ref().expect("prepared for opinf");
                if n > u.ncols() {
                    return Err(Error::RankDeficient(format!(
                        "training snapshots carry at most {} modes, asked for {n}",
                        u.ncols()
                    )));
                }
                let mut art = operator_inference(&self.blocks[0], &u.columns(0, n).into_owned(), &OpInfOptions::default())?;
                art.singular_values = vec![s.clone()];
                Ok(art)
            }
        }
    }

    /// Training snapshots (empty for LQG balanced truncation).
    pub fn training(&self) -> Option<&SnapshotSet> {
        match self.method {
            RomMethod::Opinf => self.blocks.first(),
            _ => None,
        }
    }
}

/// Training snapshots for the POD and operator-inference pipelines, cached
/// in the output directory.
fn generate_snapshots(source: &Source, out: &Path, seed: u64) -> Result<SnapshotSet> {
    let model = source.model.as_ref().ok_or_else(|| {
        Error::Invalid("model files need --snapshots for data-driven reduction".into())
    })?;
    let (path, fresh): (PathBuf, Box<dyn Fn() -> Result<SnapshotSet>>) = match model.name {
        ModelName::Fhn => {
            let sys = model.system.clone();
            (
                out.join(format!("{}.qbsnap", model.tag)),
                Box::new(move || fhn_snapshots(&sys, &FhnSnapshotPlan::default())),
            )
        }
        ModelName::BurgersFd => {
            let cfg = model.fd.clone().expect("burgers-fd config");
            (
                out.join(format!("{}-seed{seed}.qbsnap", model.tag)),
                Box::new(move || {
                    let plan = RandomInputPlan { seed, ..Default::default() };
                    Ok(burgers_fd_training_data(&cfg, &plan)?.snapshots)
                }),
            )
        }
        other => {
            return Err(Error::Invalid(format!(
                "no training data plan for {}; pass --snapshots",
                other.as_str()
            )))
        }
    };
    if path.exists() {
        return load_snapshots(&path);
    }
    eprintln!("generating training snapshots ({})", path.display());
    let snap = fresh()?;
    save_snapshots(&path, &snap)?;
    Ok(snap)
}

pub fn load_rom(path: &Path) -> Result<RomArtifact> {
    RomArtifact::from_file(&read_json::<RomFile>(path)?)
}

pub fn default_certificate(rom: Option<RomMethod>) -> CertificateKind {
    match rom {
        Some(RomMethod::Lqgbt) => CertificateKind::LqgSigma,
        _ => CertificateKind::LyapunovIdentity,
    }
}

/// Certificate for a full-order system. The LQG variants use the control
/// Riccati solution on the mass-folded system, which is returned with it.
pub fn fom_certificate(sys: &QBSystem, kind: CertificateKind) -> Result<(QBSystem, LyapunovCertificate)> {
    match kind {
        CertificateKind::LyapunovIdentity => Ok((sys.clone(), lyapunov_identity_certificate(sys)?)),
        CertificateKind::LqgSigma => lqg_fom_certificate(sys),
        CertificateKind::RiccatiImplied => {
            let (folded, cert) = lqg_fom_certificate(sys)?;
            let implied = riccati_implied_certificate(&folded, &cert.p)?;
            Ok((folded, implied))
        }
    }
}

pub fn rom_certificate(art: &RomArtifact, kind: CertificateKind) -> Result<(QBSystem, LyapunovCertificate)> {
    Ok((art.system.clone(), certificate_for(kind, art)?))
}

/// Parse `7`, `3,5,7` or `3..21:2` (inclusive range with optional step).
pub fn parse_orders(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Invalid(format!("cannot parse order list {spec:?}"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let orders = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1),
        };
        let lo = num(lo)?;
        if step == 0 || hi < lo {
            return Err(bad());
        }
        (lo..=hi).step_by(step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if orders.is_empty() || orders.contains(&0) {
        return Err(Error::Invalid(format!("orders must be positive, got {spec:?}")));
    }
    Ok(orders)
}
