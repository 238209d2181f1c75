use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use dsos_cbf::lpsolve::{write_lp_file, LpProblem};
use dsos_cbf::satbench::{run_benchmark, CwParams};
use dsos_cbf::specio::{
    load_problem, write_bench_report, write_report, zero_bench_timings, zero_timings, ProblemSpec, ReportFormat,
};
use dsos_cbf::verifier::{
    assemble_emptiness_lp, assemble_single_lp, augment_archimedean, balanced_deg_p, VerifyError, REPORT_DIR_ENV,
};
use dsos_cbf::{emptiness_check, verify_multi, verify_single, Verdict, VerifierOptions};

const EXIT_OK: u8 = 0;
const EXIT_INCONCLUSIVE: u8 = 1;
const EXIT_EMPTY: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Verify control barrier functions of polynomial control-affine systems
/// with DSOS linear programs.
#[derive(Parser, Debug)]
#[command(name = "dsos-cbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify every candidate and, for several, that their safe sets intersect.
    Verify {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Only search for a certificate that the safe sets do not intersect.
    EmptyCheck {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write one assembled program in CPLEX LP format.
    ExportLp(ExportArgs),
    /// Run the satellite-inspection scaling study for 1..=L chasers.
    BenchSatellite(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Exponents a to try, e.g. 0,1.
    #[arg(long, value_delimiter = ',')]
    a_values: Option<Vec<u32>>,
    /// DSOS half-degrees to try.
    #[arg(long, value_delimiter = ',')]
    deg_s: Option<Vec<u32>>,
    /// Free-multiplier degrees to try.
    #[arg(long, value_delimiter = ',')]
    deg_p: Option<Vec<u32>>,
    /// Add C - |x|^2 to the emptiness generators.
    #[arg(long)]
    archimedean_c: Option<u32>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Report path; defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve programs one after another.
    #[arg(long)]
    no_parallel: bool,
    /// Simplex pivot limit per program.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Zero all timing fields in the report.
    #[arg(long)]
    deterministic: bool,
    /// Keep unused variables and input channels in the programs.
    #[arg(long)]
    no_reduce: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LpChoice {
    Single,
    Emptiness,
}

#[derive(Args, Debug)]
struct ExportArgs {
    problem: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LpChoice::Single)]
    lp: LpChoice,
    /// Candidate index (0-based) for the single program.
    #[arg(long, default_value_t = 0)]
    candidate: usize,
    #[arg(long)]
    a: Option<u32>,
    #[arg(long)]
    deg_s: Option<u32>,
    #[arg(long)]
    deg_p: Option<u32>,
    #[arg(long)]
    archimedean_c: Option<u32>,
    #[arg(long)]
    no_reduce: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Largest number of chasers.
    #[arg(long = "L", value_parser = clap::value_parser!(u32).range(1..))]
    chasers: u32,
    /// Mean motion in rad/s.
    #[arg(long)]
    mean_motion: Option<f64>,
    /// Chaser mass in kg.
    #[arg(long)]
    mass: Option<f64>,
    /// Chaser thrust in N.
    #[arg(long)]
    thrust: Option<f64>,
    /// Minimum safe radius in km.
    #[arg(long)]
    r_t: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidOptions(_) | VerifyError::NoCandidates => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Verified | Verdict::MultiVerified | Verdict::NoEmptinessCertificate => EXIT_OK,
        Verdict::Inconclusive | Verdict::MultiInconclusive => EXIT_INCONCLUSIVE,
        Verdict::EmptinessCertified => EXIT_EMPTY,
    }
}

fn load(path: &Path) -> Result<ProblemSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    load_problem(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn apply_common(mut o: VerifierOptions, c: &Common) -> Result<VerifierOptions, CliError> {
    if let Some(v) = &c.a_values {
        o.a_values = v.clone();
    }
    if c.deg_s.is_some() {
        o.deg_s = c.deg_s.clone();
    }
    if c.deg_p.is_some() {
        o.deg_p = c.deg_p.clone();
    }
    if c.archimedean_c.is_some() {
        o.archimedean_c = c.archimedean_c;
    }
    if let Some(n) = c.max_iters {
        o.lp.max_iters = n;
    }
    if c.no_parallel {
        o.parallel = false;
    }
    if c.no_reduce {
        o.reduce_support = false;
    }
    o.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(o)
}

fn emit(text: &str, out: Option<&Path>, stem: &str, format: Format) -> Result<(), CliError> {
    let ext = match format {
        Format::Json => "json",
        Format::Text => "txt",
    };
    let path = match out {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(REPORT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{stem}.report.{ext}"))),
    };
    match path {
        Some(p) => {
            std::fs::write(&p, text).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))?;
            log::info!("report written to {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "problem".to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_verify(problem: &Path, common: &Common, only_emptiness: bool) -> Result<u8, CliError> {
    let spec = load(problem)?;
    let opts = apply_common(spec.options.clone(), common)?;
    let cands = spec.cbfs()?;
    let mut out = if only_emptiness {
        emptiness_check(&cands, spec.nstates(), &opts)?
    } else if cands.len() == 1 {
        verify_single(&spec.system, &cands[0], &opts)?
    } else {
        verify_multi(&spec.system, &cands, &opts)?
    };
    if common.deterministic {
        zero_timings(&mut out);
    }
    let text = write_report(&out, &spec.variables, common.format.into());
    emit(&text, common.out.as_deref(), &stem(problem), common.format)?;
    Ok(verdict_code(out.verdict))
}

fn cmd_export(args: &ExportArgs) -> Result<u8, CliError> {
    let spec = load(&args.problem)?;
    let reduce = !args.no_reduce && spec.options.reduce_support;
    let lp: LpProblem = match args.lp {
        LpChoice::Single => {
            let cands = spec.cbfs()?;
            let cand = cands.get(args.candidate).ok_or_else(|| {
                CliError::Usage(format!("candidate {} out of range (problem has {})", args.candidate, cands.len()))
            })?;
            let a = args.a.unwrap_or(spec.options.a_values[0]);
            let deg_s = args
                .deg_s
                .or_else(|| spec.options.deg_s.as_ref().map(|v| v[0]))
                .unwrap_or(0);
            let deg_p = args
                .deg_p
                .or_else(|| spec.options.deg_p.as_ref().map(|v| v[0]))
                .unwrap_or_else(|| balanced_deg_p(cand, a, deg_s));
            assemble_single_lp(&spec.system, cand, a, deg_s, deg_p, reduce)?.lp
        }
        LpChoice::Emptiness => {
            let mut gens = spec.candidates.clone();
            if let Some(c) = args.archimedean_c.or(spec.options.archimedean_c) {
                gens = augment_archimedean(&gens, spec.nstates(), c)?;
            }
            let deg_s = args
                .deg_s
                .or_else(|| spec.options.deg_s.as_ref().map(|v| v[0]))
                .unwrap_or(0);
            assemble_emptiness_lp(&gens, spec.nstates(), deg_s, reduce)?.lp
        }
    };
    write_lp_file(&lp, &args.out).map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!(
        "wrote {} ({} variables, {} rows)",
        args.out.display(),
        lp.nvars,
        lp.num_rows()
    );
    Ok(EXIT_OK)
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, CliError> {
    let mut params = CwParams::cubesat(1);
    if let Some(v) = args.mean_motion {
        params.mean_motion = v;
    }
    if let Some(v) = args.mass {
        params.masses = vec![v];
    }
    if let Some(v) = args.thrust {
        params.thrusts = vec![v];
    }
    if let Some(v) = args.r_t {
        params.r_t = v;
    }
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = apply_common(VerifierOptions::default(), &args.common)?;
    let mut report =
        run_benchmark(&params, args.chasers as usize, &opts).map_err(|e| CliError::Internal(e.to_string()))?;
    if args.common.deterministic {
        zero_bench_timings(&mut report);
    }
    let text = write_bench_report(&report, args.common.format.into());
    emit(&text, args.common.out.as_deref(), "bench-satellite", args.common.format)?;
    if report.rows.iter().any(|r| r.error.is_some()) {
        return Ok(EXIT_INTERNAL);
    }
    Ok(report
        .rows
        .iter()
        .filter_map(|r| r.verdict)
        .map(verdict_code)
        .max()
        .unwrap_or(EXIT_OK))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Verify { problem, common } => cmd_verify(problem, common, false),
        Command::EmptyCheck { problem, common } => cmd_verify(problem, common, true),
        Command::ExportLp(args) => cmd_export(args),
        Command::BenchSatellite(args) => cmd_bench(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
