//! Command-line front end: configuration, orchestration, persistence of
//! paths and reports, and static plots.

pub mod config;
pub mod io;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ofbm_core::diagnostics::{
    run_convergence_study, run_exact_study, ConvergenceReport, ExactStudyConfig, StudyConfig, StudyTarget,
};
use ofbm_core::exact::ExactSampler;
use ofbm_core::model::{spectral_covariance, validate_spec};
use ofbm_core::partial_sums::{Normalization, PartialSumConfig, PartialSumScheme, StationaryCovSeq};
use ofbm_core::rng::derive_seed;
use ofbm_core::telegraph::TelegraphScheme;
use ofbm_core::{GridPath, OfbmError, Operator};
use serde::{Deserialize, Serialize};

pub use config::{RunConfig, Scheme};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] OfbmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(OfbmError::InvalidInput(_)) => 2,
            CliError::Core(OfbmError::NumericalFailure { .. } | OfbmError::NotPositiveSemidefinite(_)) => 3,
            CliError::Core(OfbmError::Domain(_) | OfbmError::InvalidModel(_)) => 4,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) | CliError::VerificationFailed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ofbm",
    version,
    about = "Simulate and verify operator fractional Brownian motions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the exponent window and properness of a spec.
    Validate(CommonArgs),
    /// Print the covariance at time 1.
    Gamma(CommonArgs),
    /// Sample exact paths on the grid.
    Exact(CommonArgs),
    /// Sample telegraph-driven approximations at the top level.
    Telegraph(CommonArgs),
    /// Sample normalized partial sums at the top level.
    PartialSums(CommonArgs),
    /// Run a convergence study and write a JSON report.
    Verify(CommonArgs),
    /// Render SVG charts from existing paths and report files.
    Plot(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
}

impl CommonArgs {
    /// Loads the config (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = Some(r);
        }
        if let Some(l) = &self.levels {
            cfg.levels = Some(l.clone());
        }
        if let Some(s) = self.scheme {
            cfg.scheme = Some(s);
        }
        Ok(cfg)
    }
}

/// Persisted verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub report: ConvergenceReport,
    pub config_echo: RunConfig,
    pub tool_version: String,
}

fn format_matrix(m: &Operator) -> String {
    m.rows()
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Samples paths for `scheme` at the top configured level.
pub fn sample_paths(cfg: &RunConfig, scheme: Scheme) -> Result<Vec<GridPath>, CliError> {
    let grid = cfg.grid.times()?;
    let q = cfg.quadrature(scheme)?;
    let count = cfg.replicates(scheme);
    let level = *cfg
        .levels(scheme)
        .last()
        .ok_or_else(|| CliError::Config("levels must not be empty".into()))?;
    let seed = derive_seed(cfg.seed, 0);
    match scheme {
        Scheme::Exact => {
            let sampler = ExactSampler::new(&grid, &cfg.exponent()?, &cfg.gamma(&q)?)?;
            Ok(sampler.sample_many(seed, count))
        }
        Scheme::Telegraph => {
            let scheme = TelegraphScheme::new(&cfg.spec()?, level as f64, &grid, &q)?;
            Ok(scheme.sample_many(seed, count)?)
        }
        Scheme::PartialSums => {
            let (hurst, scales) = cfg.hurst_scales()?;
            let cov = StationaryCovSeq::fgn_diagonal(hurst.clone(), scales)?;
            let ps = PartialSumConfig::new(level as usize, Operator::diag(&hurst), Normalization::AutoFgn)?;
            Ok(PartialSumScheme::new(&cov, &ps, &grid)?.sample_many(seed, count)?)
        }
    }
}

/// Runs the verification study configured by `cfg`.
pub fn verify(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let scheme = cfg.scheme();
    let echo = cfg.effective(scheme)?;
    let grid = cfg.grid.times()?;
    let q = cfg.quadrature(scheme)?;
    let report = match scheme {
        Scheme::Exact => {
            let uniform = grid.len() > 2 && grid.windows(2).all(|w| ((w[1] - w[0]) - grid[1]).abs() <= 1e-12);
            run_exact_study(&ExactStudyConfig {
                exponent: cfg.exponent()?,
                gamma: cfg.gamma(&q)?,
                grid,
                replicates: cfg.replicates(scheme),
                seed: cfg.seed,
                scale: 2.0,
                shift: uniform.then_some(echo.grid.times.as_ref().expect("filled")[1]),
                z_threshold: cfg.z_threshold,
            })?
        }
        Scheme::Telegraph | Scheme::PartialSums => {
            let target = if scheme == Scheme::Telegraph {
                StudyTarget::Telegraph { spec: cfg.spec()? }
            } else {
                let (hurst, scales) = cfg.hurst_scales()?;
                StudyTarget::PartialSums { hurst, scales }
            };
            run_convergence_study(&StudyConfig {
                target,
                levels: cfg.levels(scheme),
                grid,
                replicates: cfg.replicates(scheme),
                seed: cfg.seed,
                quadrature: q,
                z_threshold: cfg.z_threshold,
            })?
        }
    };
    Ok(RunReport {
        report,
        config_echo: echo,
        tool_version: TOOL_VERSION.into(),
    })
}

pub fn report_json(report: &RunReport) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn init_threads() {
    if let Some(n) = std::env::var("OFBM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            // A pool already built by an earlier call in this process is kept.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    init_threads();
    match &cli.command {
        Command::Validate(a) => {
            let cfg = a.resolve()?;
            let q = cfg.quadrature(Scheme::Exact)?;
            let report = validate_spec(&cfg.spec()?, &q);
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            if !report.passed() {
                let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                return Err(OfbmError::InvalidModel(format!("failed checks: {}", names.join(", "))).into());
            }
        }
        Command::Gamma(a) => {
            let cfg = a.resolve()?;
            let q = cfg.quadrature(Scheme::Exact)?;
            let gamma = spectral_covariance(1.0, 1.0, &cfg.spec()?, &q)?.symmetrized();
            writeln!(out, "{}", format_matrix(&gamma))?;
        }
        Command::Exact(a) | Command::Telegraph(a) | Command::PartialSums(a) => {
            let scheme = match &cli.command {
                Command::Exact(_) => Scheme::Exact,
                Command::Telegraph(_) => Scheme::Telegraph,
                _ => Scheme::PartialSums,
            };
            let cfg = a.resolve()?;
            let paths = sample_paths(&cfg, scheme)?;
            let file = cfg.output.paths_file();
            io::write_paths_csv(&file, &paths)?;
            writeln!(out, "wrote {} paths to {}", paths.len(), file.display())?;
        }
        Command::Verify(a) => {
            let cfg = a.resolve()?;
            let report = verify(&cfg)?;
            let file = cfg.output.report_file();
            io::write_atomic(&file, report_json(&report)?.as_bytes())?;
            for l in &report.report.levels {
                writeln!(
                    out,
                    "level {:>8}  max_abs_err {:.3e}  max_se {:.3e}  max_z {:.2}  {}",
                    l.level,
                    l.max_abs_err,
                    l.max_se,
                    l.max_z,
                    if l.pass { "pass" } else { "FAIL" }
                )?;
            }
            writeln!(out, "report written to {}", file.display())?;
            if !report.report.pass {
                return Err(CliError::VerificationFailed(format!("see {}", file.display())));
            }
        }
        Command::Plot(a) => {
            let cfg = a.resolve()?;
            let mut wrote = 0;
            let paths_file = cfg.output.paths_file();
            if paths_file.exists() {
                let paths = io::read_paths_csv(&paths_file)?;
                let svg = cfg.output.dir.join("paths.svg");
                io::write_atomic(&svg, plot::paths_chart(&paths, 20).to_svg().as_bytes())?;
                writeln!(out, "wrote {}", svg.display())?;
                wrote += 1;
            }
            let report_file = cfg.output.report_file();
            if report_file.exists() {
                let text = std::fs::read_to_string(&report_file)?;
                let report: RunReport = serde_json::from_str(&text)?;
                let svg = cfg.output.dir.join("convergence.svg");
                io::write_atomic(&svg, plot::error_chart(&report.report).to_svg().as_bytes())?;
                writeln!(out, "wrote {}", svg.display())?;
                wrote += 1;
            }
            if wrote == 0 {
                return Err(CliError::Config(format!(
                    "nothing to plot: neither {} nor {} exists",
                    paths_file.display(),
                    report_file.display()
                )));
            }
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
