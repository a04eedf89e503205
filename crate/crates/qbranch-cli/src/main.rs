//! Batch front-end: generate fields, run analyses, emit CSV/JSON artifacts.

mod verify;

use clap::{Args, Parser, Subcommand};
use qbranch::blowup;
use qbranch::competitor;
use qbranch::frequency;
use qbranch::io as qio;
use qbranch::oracle::{self, GeneratorKind, GeneratorSpec, ModeSpec, PieceSpec};
use qbranch::trace;
use qbranch::{BranchedGrid, Error};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "qbranch", version, about = "Q-valued field calculus on branched disks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a field file from a synthetic spec.
    Generate(GenerateArgs),
    /// Frequency profile and decay fits of a field file.
    Analyze(AnalyzeArgs),
    /// Harmonic competitor energies of a field's boundary trace.
    Competitor(CompetitorArgs),
    /// Blow-up family, limit profile and convergence report.
    Blowup(BlowupArgs),
    /// Run invariant suites and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridArgs {
    /// Covering order of the branched disk.
    #[arg(long, default_value_t = 1)]
    qbar: usize,
    /// Radial annuli.
    #[arg(long, default_value_t = 256)]
    k: usize,
    /// Angular samples per 2π of covering angle.
    #[arg(long, default_value_t = 256)]
    m: usize,
    /// Outer radius.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

impl GridArgs {
    fn build(&self) -> qbranch::Result<BranchedGrid> {
        BranchedGrid::new(self.qbar, self.rho, self.k, self.m)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// homogeneous | superposition | perturbed | random_lipschitz
    #[arg(long, default_value = "homogeneous")]
    kind: String,
    /// Cycle length of the single generated piece (flag interface).
    #[arg(long, default_value_t = 1)]
    qj: usize,
    /// Mode number l of the single generated piece.
    #[arg(long, default_value_t = 1)]
    mode: usize,
    /// Mode amplitude.
    #[arg(long, default_value_t = 1.0)]
    amp: f64,
    /// Target dimension.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Perturbation order β (perturbed kind).
    #[arg(long, default_value_t = 0.5)]
    order: f64,
    /// Perturbation amplitude (perturbed kind).
    #[arg(long, default_value_t = 0.0)]
    amplitude: f64,
    /// Number of sheets (random_lipschitz kind).
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Band limit (random_lipschitz kind).
    #[arg(long, default_value_t = 4)]
    lmax: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full GeneratorSpec as a JSON file (overrides the flag interface).
    #[arg(long)]
    spec_json: Option<PathBuf>,
    /// Output field file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AnalyzeArgs {
    field: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    gamma0: f64,
    /// Fit window as fractions of ρ.
    #[arg(long, default_value = "0.1,0.8")]
    window: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CompetitorArgs {
    field: PathBuf,
    /// Trace radius (defaults to the outer radius).
    #[arg(long)]
    radius: Option<f64>,
    /// Fourier band limit (defaults to M/4).
    #[arg(long)]
    lmax: Option<usize>,
    /// Blend width of the Lipschitz variant.
    #[arg(long)]
    smooth_t: Option<f64>,
    /// Clamp radius of the Lipschitz variant (relative).
    #[arg(long, default_value_t = 0.05)]
    clamp: f64,
    /// Also write the competitor field.
    #[arg(long)]
    emit_field: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BlowupArgs {
    field: PathBuf,
    /// Normalization exponent; fitted from the profile when omitted.
    #[arg(long)]
    i0: Option<f64>,
    /// Number of dyadic radii r = rho/2^j.
    #[arg(long, default_value_t = 7)]
    dyadic: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma0: f64,
    /// Richardson extrapolation of the limit in the fitted rate.
    #[arg(long, default_value_t = false)]
    richardson: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VerifyArgs {
    /// matching | quadrature | competitor | frequency | blowup | minimize | all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> qbranch::Result<ExitCode> {
    match cli.command {
        Command::Generate(args) => generate(args).map(|_| ExitCode::SUCCESS),
        Command::Analyze(args) => analyze(args).map(|_| ExitCode::SUCCESS),
        Command::Competitor(args) => competitor_cmd(args).map(|_| ExitCode::SUCCESS),
        Command::Blowup(args) => blowup_cmd(args).map(|_| ExitCode::SUCCESS),
        Command::Verify(args) => {
            let failures = verify::run_suite(&args.suite, args.seed)?;
            if failures == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn write_manifest<T: Serialize>(dir: &Path, name: &str, config: &T) -> qbranch::Result<()> {
    qio::write_json(&dir.join(name), config)
}

fn generate(args: GenerateArgs) -> qbranch::Result<()> {
    let grid = args.grid.build()?;
    let spec: GeneratorSpec = match &args.spec_json {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => {
            let piece = |amp_a: f64| PieceSpec {
                q_j: args.qj,
                offset: vec![],
                modes: vec![ModeSpec {
                    l: args.mode,
                    a: {
                        let mut a = vec![0.0; args.n];
                        a[0] = amp_a;
                        a
                    },
                    b: {
                        let mut b = vec![0.0; args.n];
                        if args.n > 1 {
                            b[1] = amp_a;
                        }
                        b
                    },
                }],
            };
            let kind = match args.kind.as_str() {
                "homogeneous" => GeneratorKind::Homogeneous {
                    pieces: vec![piece(args.amp)],
                },
                "superposition" => GeneratorKind::Superposition {
                    pieces: vec![piece(args.amp)],
                },
                "perturbed" => GeneratorKind::Perturbed {
                    pieces: vec![piece(args.amp)],
                    order: args.order,
                    amplitude: args.amplitude,
                    profile: vec![ModeSpec {
                        l: 1,
                        a: {
                            let mut a = vec![0.0; args.n];
                            a[0] = 1.0;
                            a
                        },
                        b: vec![0.0; args.n],
                    }],
                },
                "random_lipschitz" => GeneratorKind::RandomLipschitz {
                    q: args.q,
                    l_max: args.lmax,
                    amplitude: args.amp,
                    separation: 4.0,
                },
                other => {
                    return Err(Error::Input(format!("unknown generator kind {other:?}")))
                }
            };
            GeneratorSpec {
                n: args.n,
                seed: args.seed,
                kind,
            }
        }
    };
    let field = oracle::generate(&spec, grid)?;
    qio::write_field(&args.out, &field)?;
    let dir = args
        .out
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'static str,
        args: &'a GenerateArgs,
        spec: &'a GeneratorSpec,
    }
    write_manifest(
        &dir,
        &format!(
            "{}.manifest.json",
            args.out.file_name().unwrap_or_default().to_string_lossy()
        ),
        &Manifest {
            command: "generate",
            args: &args,
            spec: &spec,
        },
    )
}

fn parse_window(s: &str, rho: f64) -> qbranch::Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Input(format!("bad window {s:?}; expected lo,hi")));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|e| Error::Input(format!("bad window: {e}")))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|e| Error::Input(format!("bad window: {e}")))?;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::Input(
            "window fractions must satisfy 0 <= lo < hi <= 1".into(),
        ));
    }
    Ok((lo * rho, hi * rho))
}

fn analyze(args: AnalyzeArgs) -> qbranch::Result<()> {
    let field = qio::read_field(&args.field)?;
    let window = parse_window(&args.window, field.grid().rho())?;
    let profile = frequency::profile(&field, args.gamma0, qbranch::EPS_TIE);
    let fits = frequency::fit_decay(&profile, window)?;
    std::fs::create_dir_all(&args.out_dir)?;
    qio::write_profile_csv(&args.out_dir.join("profile.csv"), &profile)?;
    qio::write_json(&args.out_dir.join("fits.json"), &fits)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'static str,
        args: &'a AnalyzeArgs,
    }
    write_manifest(
        &args.out_dir,
        "analyze.manifest.json",
        &Manifest {
            command: "analyze",
            args: &args,
        },
    )
}

#[derive(Serialize)]
struct EnergiesRecord {
    dirichlet: f64,
    tangential: f64,
    boundary_l2: f64,
    quadrature_check: QuadratureCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<competitor::SmoothingReport>,
}

#[derive(Serialize)]
struct QuadratureCheck {
    dirichlet: f64,
    tangential: f64,
    boundary_l2: f64,
    max_relative_error: f64,
}

fn competitor_cmd(args: CompetitorArgs) -> qbranch::Result<()> {
    let field = qio::read_field(&args.field)?;
    let grid = *field.grid();
    let radius = args.radius.unwrap_or(grid.rho());
    let l_max = args.lmax.unwrap_or(grid.angular_base() / 4);
    let tr = trace::extract_trace(&field, radius, qbranch::EPS_TIE)?;
    let dec = trace::decompose_trace(&tr, l_max, qbranch::EPS_TIE)?;
    let closed = competitor::closed_form_energies(&dec);
    let ext = competitor::harmonic_field(&dec, grid)?;
    let quad = competitor::quadrature_energies(&ext, qbranch::EPS_TIE);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-14);
    let check = QuadratureCheck {
        dirichlet: quad.dirichlet,
        tangential: quad.tangential,
        boundary_l2: quad.boundary_l2,
        max_relative_error: rel(quad.dirichlet, closed.dirichlet)
            .max(rel(quad.tangential, closed.tangential))
            .max(rel(quad.boundary_l2, closed.boundary_l2)),
    };
    let smoothing = match args.smooth_t {
        Some(t) => Some(competitor::smoothing_report(
            &dec,
            grid,
            competitor::Smoothing {
                t,
                clamp: args.clamp,
            },
            qbranch::EPS_TIE,
        )?),
        None => None,
    };
    let record = EnergiesRecord {
        dirichlet: closed.dirichlet,
        tangential: closed.tangential,
        boundary_l2: closed.boundary_l2,
        quadrature_check: check,
        smoothing,
    };
    std::fs::create_dir_all(&args.out_dir)?;
    qio::write_json(&args.out_dir.join("energies.json"), &record)?;
    if let Some(path) = &args.emit_field {
        qio::write_field(path, &ext)?;
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'static str,
        args: &'a CompetitorArgs,
        l_max: usize,
        radius: f64,
    }
    write_manifest(
        &args.out_dir,
        "competitor.manifest.json",
        &Manifest {
            command: "competitor",
            args: &args,
            l_max,
            radius,
        },
    )
}

#[derive(Serialize)]
struct BlowupRecord {
    #[serde(flatten)]
    report: blowup::LimitReport,
    fitted: frequency::DecayFit,
    f0: Option<qio::TraceFile>,
}

fn blowup_cmd(args: BlowupArgs) -> qbranch::Result<()> {
    let field = qio::read_field(&args.field)?;
    let grid = *field.grid();
    let profile = frequency::profile(&field, args.gamma0, qbranch::EPS_TIE);
    let window = (0.1 * grid.rho(), 0.8 * grid.rho());
    let fitted = frequency::fit_decay(&profile, window)?;
    let i0 = args.i0.unwrap_or(fitted.i0);
    let radii: Vec<f64> = (0..args.dyadic)
        .map(|j| grid.rho() * 0.5f64.powi(j as i32))
        .collect();
    let fam = blowup::family(&field, i0, &radii, qbranch::EPS_TIE)?;
    let richardson = if args.richardson { fitted.lambda } else { None };
    let (f0, report) = blowup::limit_profile(&fam, richardson)?;
    let record = BlowupRecord {
        report,
        fitted,
        f0: f0.as_ref().map(qio::TraceFile::from_trace),
    };
    std::fs::create_dir_all(&args.out_dir)?;
    qio::write_json(&args.out_dir.join("blowup.json"), &record)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'static str,
        args: &'a BlowupArgs,
        i0: f64,
    }
    write_manifest(
        &args.out_dir,
        "blowup.manifest.json",
        &Manifest {
            command: "blowup",
            args: &args,
            i0,
        },
    )
}
