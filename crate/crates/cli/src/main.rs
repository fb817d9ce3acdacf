mod pipeline;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbstab::densela::LyapunovCertificate;
use qbstab::estimates::{optimize_radius, OptimizeOptions, StabilityEstimate};
use qbstab::io::{write_json, ModelFile};
use qbstab::qbsys::QBSystem;
use qbstab::rom::{reconstruction_error, spectral_abscissa, CertificateKind, RomArtifact};
use qbstab::sim::IntegrateOptions;
use qbstab::validate::{probe_tightness, validate_estimate, ValidateOptions, DEFAULT_TIGHTNESS_FACTORS};
use qbstab::{Error, Result};

use pipeline::{
    build_model, default_certificate, file_tag, fom_certificate, load_rom, parse_orders, rom_certificate,
    ModelName, ModelOverrides, Reducer, RomKind, Source,
};

/// Stability domain estimates for quadratic-bilinear systems and their
/// reduced models.
#[derive(Parser)]
#[command(name = "qbstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and serialize a full-order model.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Reduce a model and write the reduced model with its singular values.
    Reduce(ReduceArgs),
    /// Analytic and optimized stability radius of a model or reduced model.
    Estimate(EstimateArgs),
    /// Monte-Carlo check of an estimated radius.
    Validate(ValidateArgs),
    /// Radii over a list of reduced orders, one CSV row per order.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum ModelAction {
    Build(BuildArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, env = "QBSTAB_OUT", default_value = "qbstab-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(value_enum)]
    name: ModelName,
    #[command(flatten)]
    overrides: ModelOverrides,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum)]
    model: Option<ModelName>,
    #[arg(long, value_name = "FILE")]
    model_file: Option<PathBuf>,
    /// Training snapshots for pod/opinf (binary snapshot file).
    #[arg(long, value_name = "FILE")]
    snapshots: Option<PathBuf>,
    #[command(flatten)]
    overrides: ModelOverrides,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 1e4)]
    mu_bound: f64,
    #[arg(long, default_value_t = 0.1)]
    tolx: f64,
    #[arg(long, default_value_t = 1e-3)]
    tolfun: f64,
    #[arg(long, default_value_t = 1000)]
    maxiter: usize,
}

impl OptimizerArgs {
    fn options(&self, seed: u64) -> Result<OptimizeOptions> {
        for (name, v) in [("mu-bound", self.mu_bound), ("tolx", self.tolx), ("tolfun", self.tolfun)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("--{name} must be non-negative, got {v}")));
            }
        }
        Ok(OptimizeOptions {
            restarts: self.restarts,
            mu_bound: self.mu_bound,
            tol_x: self.tolx,
            tol_fun: self.tolfun,
            max_iter: self.maxiter,
            seed,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum)]
    rom: RomKind,
    /// Reduced order (modes per variable for fhn POD).
    #[arg(long)]
    n: usize,
    /// Also report the state reconstruction error on the training data (opinf).
    #[arg(long)]
    recon: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum)]
    rom: Option<RomKind>,
    #[arg(long)]
    n: Option<usize>,
    /// Reduced model written by `reduce`.
    #[arg(long, value_name = "FILE")]
    rom_file: Option<PathBuf>,
    /// lyapunov-identity, lqg-sigma or riccati-implied.
    #[arg(long)]
    cert: Option<CertificateKind>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    estimate: EstimateArgs,
    /// Radius to test; defaults to the optimized radius.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0.99)]
    factor: f64,
    /// Also probe 1.5, 2, 5 and 10 times the radius.
    #[arg(long)]
    tightness: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum)]
    rom: RomKind,
    /// Orders: `7`, `3,5,7` or `3..21:2`.
    #[arg(long)]
    n: String,
    #[arg(long)]
    cert: Option<CertificateKind>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Model {
            action: ModelAction::Build(args),
        } => cmd_model_build(&args),
        Command::Reduce(args) => cmd_reduce(&args),
        Command::Estimate(args) => cmd_estimate(&args).map(|_| ()),
        Command::Validate(args) => cmd_validate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnstableLinearPart { .. } | Error::InvalidCertificate(_) => 2,
        _ => 1,
    }
}

fn status(e: &Error) -> &'static str {
    match e {
        Error::UnstableLinearPart { .. } => "unstable-linear-part",
        Error::InvalidCertificate(_) => "invalid-certificate",
        _ => "error",
    }
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn cmd_model_build(args: &BuildArgs) -> Result<()> {
    let out = out_dir(&args.common)?;
    let built = build_model(args.name, &args.overrides, args.common.seed)?;
    let sys = &built.system;
    let path = out.join(format!("{}.model.json", built.tag));
    let mut file = ModelFile::from_system(sys);
    file.name = Some(built.tag.clone());
    file.x0 = built.x0.as_ref().map(|x| x.iter().copied().collect());
    write_json(&path, &file)?;
    println!("model {}: n = {}, m = {}, nnz(H) = {}", built.tag, sys.n(), sys.m(), sys.h().nnz());
    println!("||H||_2 = {:e}", sys.h().spectral_norm());
    println!("max Re eig(E^-1 A) = {:e}", spectral_abscissa(sys)?);
    println!("wrote {}", path.display());
    Ok(())
}

fn source(args: &SourceArgs, seed: u64) -> Result<Source> {
    Source::new(args.model, args.model_file.as_deref(), &args.overrides, seed)
}

fn warn_unstable(art: &RomArtifact, n: usize) {
    if art.linear_part_unstable() {
        eprintln!(
            "warning: n = {n}: linear part of the reduced model is not Hurwitz (max Re eig = {:e})",
            art.max_real_eig
        );
    }
}

fn singular_value_csv(art: &RomArtifact) -> String {
    let mut s = String::from("block,index,value\n");
    for (b, values) in art.singular_values.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{b},{},{v:e}", i + 1);
        }
    }
    s
}

fn cmd_reduce(args: &ReduceArgs) -> Result<()> {
    let out = out_dir(&args.common)?;
    let src = source(&args.source, args.common.seed)?;
    let reducer = Reducer::new(&src, args.rom, args.source.snapshots.as_deref(), out, args.common.seed)?;
    let art = reducer.reduce(args.n)?;
    let stem = format!("{}-{}-n{}", src.tag, reducer.method(), args.n);
    let rom_path = out.join(format!("{stem}.rom.json"));
    write_json(&rom_path, &art.to_file())?;
    let sv_path = out.join(format!("{}-{}-sv.csv", src.tag, reducer.method()));
    fs::write(&sv_path, singular_value_csv(&art))?;
    println!("{} reduced model of dimension {}", reducer.method(), art.dim());
    println!("max Re eig(E^-1 A) = {:e}", art.max_real_eig);
    if let Some((ctrl, filt)) = art.riccati_residuals {
        println!("reduced Riccati residuals: control {ctrl:e}, filter {filt:e}");
    }
    warn_unstable(&art, args.n);
    if args.recon {
        let snap = reducer
            .training()
            .ok_or_else(|| Error::Invalid("--recon needs training snapshots (opinf)".into()))?;
        let opts = IntegrateOptions {
            rtol: 1e-6,
            atol: 1e-9,
            ..Default::default()
        };
        let err = reconstruction_error(&art, snap, &opts)?;
        println!("reconstruction error = {err:e}");
    }
    println!("wrote {}", rom_path.display());
    println!("wrote {}", sv_path.display());
    Ok(())
}

/// The system and certificate an estimate is computed for.
struct Target {
    system: QBSystem,
    cert: LyapunovCertificate,
    tag: String,
}

fn target(args: &EstimateArgs, out: &Path) -> Result<Target> {
    let seed = args.common.seed;
    if let Some(path) = &args.rom_file {
        let art = load_rom(path)?;
        let kind = args.cert.unwrap_or_else(|| default_certificate(Some(art.method)));
        let (system, cert) = rom_certificate(&art, kind)?;
        return Ok(Target {
            system,
            cert,
            tag: format!("{}-{kind}", file_tag(path)),
        });
    }
    let src = source(&args.source, seed)?;
    match (args.rom, args.n) {
        (Some(rom), Some(n)) => {
            let reducer = Reducer::new(&src, rom, args.source.snapshots.as_deref(), out, seed)?;
            let art = reducer.reduce(n)?;
            warn_unstable(&art, n);
            let kind = args.cert.unwrap_or_else(|| default_certificate(Some(art.method)));
            let (system, cert) = rom_certificate(&art, kind)?;
            Ok(Target {
                system,
                cert,
                tag: format!("{}-{}-n{n}-{kind}", src.tag, art.method),
            })
        }
        (Some(_), None) => Err(Error::Invalid("--rom needs --n".into())),
        (None, Some(_)) => Err(Error::Invalid("--n needs --rom".into())),
        (None, None) => {
            let kind = args.cert.unwrap_or_else(|| default_certificate(None));
            let (system, cert) = fom_certificate(&src.system, kind)?;
            Ok(Target {
                system,
                cert,
                tag: format!("{}-{kind}", src.tag),
            })
        }
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(Target, StabilityEstimate)> {
    let out = out_dir(&args.common)?;
    let t = target(args, out)?;
    let est = optimize_radius(&t.system, &t.cert, &args.optimizer.options(args.common.seed)?)?;
    let path = out.join(format!("estimate-{}.json", t.tag));
    fs::write(&path, est.to_json()?)?;
    println!("{}", StabilityEstimate::CSV_HEADER);
    println!("{}", est.csv_record(&t.tag));
    println!("wrote {}", path.display());
    Ok((t, est))
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let common = &args.estimate.common;
    let (t, est) = cmd_estimate(&args.estimate)?;
    let out = out_dir(common)?;
    let rho = args.rho.unwrap_or(est.rho_star);
    let opts = ValidateOptions {
        count: args.count,
        factor: args.factor,
        seed: common.seed,
        ..Default::default()
    };
    let report = validate_estimate(&t.system, &t.cert, rho, &opts)?;
    let path = out.join(format!("validate-{}.json", t.tag));
    fs::write(&path, report.to_json()?)?;
    println!("{}", qbstab::validate::ValidationReport::CSV_HEADER);
    println!("{}", report.csv_record());
    if !report.contained() {
        eprintln!(
            "warning: {} of {} samples diverged at rho = {:e}",
            report.diverged, report.samples, report.rho_tested
        );
    }
    if args.tightness {
        let probe = probe_tightness(&t.system, &t.cert, rho, &DEFAULT_TIGHTNESS_FACTORS, &opts)?;
        for (f, r) in probe.factors.iter().zip(&probe.reports) {
            println!("factor {f}: {}", r.csv_record());
        }
        match probe.first_divergence {
            Some(f) => println!("first divergence at {f} x rho"),
            None => println!("no divergence up to {} x rho", probe.factors.last().copied().unwrap_or(1.0)),
        }
        write_json(out.join(format!("tightness-{}.json", t.tag)), &probe)?;
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub const SWEEP_HEADER: &str = "n,rho_analytic,rho_star,alpha_star,wall_ms,status";

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let out = out_dir(&args.common)?;
    let seed = args.common.seed;
    let orders = parse_orders(&args.n)?;
    let opts = args.optimizer.options(seed)?;
    let src = source(&args.source, seed)?;
    let reducer = Reducer::new(&src, args.rom, args.source.snapshots.as_deref(), out, seed)?;
    let kind = args.cert.unwrap_or_else(|| default_certificate(Some(reducer.method())));
    let mut csv = format!("{SWEEP_HEADER}\n");
    println!("{SWEEP_HEADER}");
    for &n in &orders {
        let row = reducer.reduce(n).and_then(|art| {
            warn_unstable(&art, n);
            let (system, cert) = rom_certificate(&art, kind)?;
            optimize_radius(&system, &cert, &opts)
        });
        let line = match row {
            Ok(est) => format!(
                "{n},{:e},{:e},{:e},{},ok",
                est.rho_analytic, est.rho_star, est.alpha_star, est.wall_ms
            ),
            Err(e) => {
                eprintln!("n = {n}: {e}");
                format!("{n},,,,,{}", status(&e))
            }
        };
        println!("{line}");
        csv += &line;
        csv.push('\n');
    }
    let path = out.join(format!("sweep-{}-{}-{kind}.csv", src.tag, reducer.method()));
    fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

