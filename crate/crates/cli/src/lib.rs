//! Batch front end: `maxgauss <bound|tune|simulate|verify> --config <path>`.
//!
//! Exit status: 0 success, 1 configuration error (the message names the
//! field), 2 domain or constraint error, 3 verification failure.

pub mod config;
pub mod report;
pub mod verify;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Parser;
use maxgauss::bounds::{l_n, moment_profile};
use maxgauss::simulate::{run_experiment_with, with_workers, ExperimentOptions};
use maxgauss::tune::{optimize, TuneRequest};
use maxgauss::{DistributionSpec, MomentProfile};

use config::{
    env_overrides, load_file, Command, ConfigError, Format, Overrides, ProfileMethod, ResolveError,
    RunConfig,
};
use report::{BoundOutput, Report, SimulateOutput, TuneOutput, VerifyOutput, SCHEMA_VERSION};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DOMAIN: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "maxgauss",
    version,
    about = "Gaussian approximation bounds for maxima of sums"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sampling; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Domain(maxgauss::Error),
    Io(String),
    Verify(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => EXIT_CONFIG,
            Failure::Domain(_) => EXIT_DOMAIN,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Domain(e) => write!(f, "{e}"),
            Failure::Io(m) => f.write_str(m),
            Failure::Verify(names) => write!(f, "verification failed: {}", names.join(", ")),
        }
    }
}

impl From<maxgauss::Error> for Failure {
    fn from(e: maxgauss::Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<ResolveError> for Failure {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::Config(c) => Failure::Config(c),
            ResolveError::Domain(d) => Failure::Domain(d),
        }
    }
}

/// Parses arguments, runs, prints any error to stderr and returns the exit
/// status.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_cli(&cli) {
        Ok(_) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<Report, Failure> {
    let file = load_file(&cli.config)?;
    let env = env_overrides(|k| std::env::var(k).ok())?;
    let flags = Overrides {
        seed: cli.seed,
        reps: cli.reps,
        out: cli.out.clone(),
        format: cli.format,
        workers: cli.workers,
    };
    let cfg = RunConfig::resolve(cli.command, file, env, flags)?;
    run(&cfg)
}

/// Runs a resolved configuration and writes its report.
pub fn run(cfg: &RunConfig) -> Result<Report, Failure> {
    let report = with_workers(cfg.workers, || build_report(cfg))?;
    write_report(cfg, &report)?;
    if let Report::Verify(v) = &report {
        if !v.passed {
            let failed = v
                .suites
                .iter()
                .filter(|s| !s.passed)
                .map(|s| s.name.clone())
                .collect();
            return Err(Failure::Verify(failed));
        }
    }
    Ok(report)
}

fn seed_for(cfg: &RunConfig) -> Result<u64, Failure> {
    cfg.seed.ok_or_else(|| {
        ConfigError::new(
            "seed",
            format!("required by `{}` for a Monte Carlo profile", cfg.command),
        )
        .into()
    })
}

fn profile_for(
    cfg: &RunConfig,
    spec: &DistributionSpec,
    iota: f64,
) -> Result<MomentProfile, Failure> {
    let monte_carlo = |cfg: &RunConfig| -> Result<MomentProfile, Failure> {
        Ok(moment_profile(
            spec,
            iota,
            Some(cfg.profile.reps),
            seed_for(cfg)?,
        )?)
    };
    match cfg.profile.method {
        ProfileMethod::Analytic => Ok(moment_profile(spec, iota, None, 0)?),
        ProfileMethod::MonteCarlo => monte_carlo(cfg),
        ProfileMethod::Auto => match moment_profile(spec, iota, None, 0) {
            Err(maxgauss::Error::Unsupported(_)) => monte_carlo(cfg),
            other => Ok(other?),
        },
    }
}

fn build_report(cfg: &RunConfig) -> Result<Report, Failure> {
    Ok(match cfg.command {
        Command::Bound => {
            let spec = cfg.spec.expect("resolved");
            let params = cfg.params.expect("resolved");
            let profile = profile_for(cfg, &spec, params.iota())?;
            let bound = l_n(&params, &profile)?;
            Report::Bound(BoundOutput {
                schema_version: SCHEMA_VERSION,
                spec,
                profile,
                bound,
            })
        }
        Command::Tune => {
            let spec = cfg.spec.expect("resolved");
            let profile = profile_for(cfg, &spec, cfg.iota.expect("resolved"))?;
            let result = optimize(&TuneRequest {
                profile: profile.clone(),
                d: spec.d,
                objective: cfg.objective.expect("resolved"),
                search: cfg.search,
            })?;
            Report::Tune(TuneOutput {
                schema_version: SCHEMA_VERSION,
                spec,
                profile,
                result,
            })
        }
        Command::Simulate => {
            let result = run_experiment_with(
                &cfg.spec.expect("resolved"),
                &cfg.params.expect("resolved"),
                cfg.reps,
                cfg.seed.expect("resolved"),
                ExperimentOptions {
                    workers: None,
                    profile_reps: Some(cfg.profile.reps),
                },
            )?;
            Report::Simulate(SimulateOutput {
                schema_version: SCHEMA_VERSION,
                violations: result.violations(),
                result,
            })
        }
        Command::Verify => {
            let seed = cfg.seed.expect("resolved");
            let suites = verify::run_all(seed, cfg.reps);
            Report::Verify(VerifyOutput {
                schema_version: SCHEMA_VERSION,
                seed,
                passed: suites.iter().all(|s| s.passed),
                suites,
            })
        }
    })
}

/// `report.csv` -> `report.samples.csv`
pub fn samples_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.samples.csv"))
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}")))
        }
    }
}

fn write_report(cfg: &RunConfig, report: &Report) -> Result<(), Failure> {
    let out = cfg.out.as_deref();
    match cfg.format {
        Format::Json => {
            let bytes = report::to_json(report).map_err(|e| Failure::Io(e.to_string()))?;
            write_bytes(out, &bytes)
        }
        Format::Csv => {
            write_bytes(out, report::to_csv(report).as_bytes())?;
            if let (Report::Simulate(s), Some(p)) = (report, out) {
                write_bytes(
                    Some(&samples_path(p)),
                    report::samples_csv(&s.result).as_bytes(),
                )?;
            }
            Ok(())
        }
    }
}
