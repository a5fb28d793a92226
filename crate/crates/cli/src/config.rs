//! Run configuration: a TOML file, then `MAXGAUSS_SEED` / `MAXGAUSS_OUT`,
//! then command-line flags, each layer overriding the previous one.
//!
//! The grammar is documented in `CONFIG.md` next to this crate.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use maxgauss::tune::{Objective, SearchConfig};
use maxgauss::{DistributionSpec, SmoothingParams};
use serde::{Deserialize, Serialize};

pub const ENV_SEED: &str = "MAXGAUSS_SEED";
pub const ENV_OUT: &str = "MAXGAUSS_OUT";

/// Replications when neither the file nor the flags give `reps`.
pub const DEFAULT_REPS: usize = 10_000;
/// Cases per invariant suite for `verify` when `reps` is not given.
pub const DEFAULT_VERIFY_CASES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bound,
    Tune,
    Simulate,
    Verify,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Bound => "bound",
            Command::Tune => "tune",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// A configuration problem, reported with exit status 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }

    fn missing(field: &str, command: Command) -> Self {
        Self::new(field, format!("required by `{command}`"))
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub spec: Option<DistributionSpec>,
    pub params: Option<ParamsSection>,
    pub profile: Option<ProfileSection>,
    pub tune: Option<TuneSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub iota: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    /// Closed form where available, Monte Carlo otherwise.
    #[default]
    Auto,
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default)]
    pub method: ProfileMethod,
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    MinRadius,
    MinBound,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub objective: ObjectiveName,
    pub budget: Option<f64>,
    pub radius_cap: Option<f64>,
    pub grid_points: Option<usize>,
    pub refine_iters: Option<usize>,
    pub gamma_range: Option<[f64; 2]>,
    pub delta_range: Option<[f64; 2]>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
}

/// Where the moment profile comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfilePlan {
    pub method: ProfileMethod,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub spec: Option<DistributionSpec>,
    pub params: Option<SmoothingParams>,
    pub iota: Option<f64>,
    pub reps: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    pub profile: ProfilePlan,
    pub objective: Option<Objective>,
    pub search: SearchConfig,
}

/// Failure while resolving: either a config problem or a domain error in
/// a value that parsed fine (e.g. `gamma * delta <= 1`).
#[derive(Debug)]
pub enum ResolveError {
    Config(ConfigError),
    Domain(maxgauss::Error),
}

impl From<ConfigError> for ResolveError {
    fn from(e: ConfigError) -> Self {
        ResolveError::Config(e)
    }
}

/// Dotted key (`table.key`) of the assignment containing byte `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split_once('=')?.0.trim().trim_matches('"');
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}

pub fn parse_file(text: &str) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().trim().to_string();
        // unknown and missing keys are quoted in the message; type errors
        // are located through the span instead
        let names_key =
            message.starts_with("unknown field") || message.starts_with("missing field");
        let quoted = names_key
            .then(|| message.split('`').nth(1).map(str::to_string))
            .flatten();
        let field = quoted
            .or_else(|| e.span().and_then(|s| key_at(text, s.start)))
            .unwrap_or_else(|| "<file>".to_string());
        ConfigError::new(field, message)
    })
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigError::new("--config", format!("cannot read {}: {e}", path.display()))
    })?;
    parse_file(&text)
}

/// Reads `MAXGAUSS_SEED` and `MAXGAUSS_OUT` through `lookup`.
pub fn env_overrides(
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<(Option<u64>, Option<PathBuf>), ConfigError> {
    let seed = match lookup(ENV_SEED) {
        Some(s) => Some(s.trim().parse::<u64>().map_err(|e| {
            ConfigError::new(ENV_SEED, format!("not an unsigned integer ({e}): {s:?}"))
        })?),
        None => None,
    };
    Ok((seed, lookup(ENV_OUT).map(PathBuf::from)))
}

fn range(field: &str, r: Option<[f64; 2]>, default: (f64, f64)) -> Result<(f64, f64), ConfigError> {
    match r {
        None => Ok(default),
        Some([lo, hi]) if lo > 0.0 && lo < hi && hi.is_finite() => Ok((lo, hi)),
        Some([lo, hi]) => Err(ConfigError::new(
            field,
            format!("must satisfy 0 < lo < hi < inf, got [{lo}, {hi}]"),
        )),
    }
}

impl RunConfig {
    /// Layers file, environment and flags, then checks the fields each
    /// command needs.
    pub fn resolve(
        command: Command,
        file: FileConfig,
        env: (Option<u64>, Option<PathBuf>),
        flags: Overrides,
    ) -> Result<Self, ResolveError> {
        if let Some(c) = file.command {
            if c != command {
                return Err(ConfigError::new(
                    "command",
                    format!("file is for `{c}` but `{command}` was requested"),
                )
                .into());
            }
        }
        let seed = flags.seed.or(env.0).or(file.seed);
        let out = flags.out.or(env.1).or(file.out);
        let format = flags.format.or(file.format).unwrap_or_default();
        let workers = flags.workers.or(file.workers);
        if workers == Some(0) {
            return Err(ConfigError::new("workers", "must be positive").into());
        }
        let explicit_reps = flags.reps.or(file.reps);
        let reps = explicit_reps.unwrap_or(match command {
            Command::Verify => DEFAULT_VERIFY_CASES,
            _ => DEFAULT_REPS,
        });
        if reps == 0 {
            return Err(ConfigError::new("reps", "must be positive").into());
        }

        let needs_spec = command != Command::Verify;
        let spec = file.spec;
        if needs_spec {
            let s = spec.ok_or_else(|| ConfigError::missing("spec", command))?;
            s.validate().map_err(ResolveError::Domain)?;
        }
        if matches!(command, Command::Simulate | Command::Verify) && seed.is_none() {
            return Err(ConfigError::missing("seed", command).into());
        }

        let iota = file.params.as_ref().and_then(|p| p.iota);
        let params = match command {
            Command::Bound | Command::Simulate => {
                let p = file
                    .params
                    .as_ref()
                    .ok_or_else(|| ConfigError::missing("params", command))?;
                let gamma = p
                    .gamma
                    .ok_or_else(|| ConfigError::missing("params.gamma", command))?;
                let delta = p
                    .delta
                    .ok_or_else(|| ConfigError::missing("params.delta", command))?;
                let iota = p
                    .iota
                    .ok_or_else(|| ConfigError::missing("params.iota", command))?;
                let d = spec.map_or(1, |s| s.d);
                Some(SmoothingParams::new(gamma, delta, iota, d).map_err(ResolveError::Domain)?)
            }
            Command::Tune => {
                if iota.is_none() {
                    return Err(ConfigError::missing("params.iota", command).into());
                }
                None
            }
            Command::Verify => None,
        };

        let profile_section = file.profile.unwrap_or_default();
        let profile = ProfilePlan {
            method: profile_section.method,
            reps: profile_section.reps.unwrap_or(reps),
        };

        let mut search = SearchConfig::default();
        let objective = match (command, file.tune) {
            (Command::Tune, None) => return Err(ConfigError::missing("tune", command).into()),
            (Command::Tune, Some(t)) => {
                if let Some(g) = t.grid_points {
                    search.grid_points_per_axis = g;
                }
                if let Some(r) = t.refine_iters {
                    search.refine_iters = r;
                }
                search.gamma_range = range("tune.gamma_range", t.gamma_range, search.gamma_range)?;
                search.delta_range = range("tune.delta_range", t.delta_range, search.delta_range)?;
                Some(match t.objective {
                    ObjectiveName::MinRadius => Objective::MinimizeRadiusGivenBudget {
                        budget: t.budget.ok_or_else(|| {
                            ConfigError::new("tune.budget", "required by objective `min_radius`")
                        })?,
                    },
                    ObjectiveName::MinBound => Objective::MinimizeBoundGivenRadius {
                        radius_cap: t.radius_cap.ok_or_else(|| {
                            ConfigError::new("tune.radius_cap", "required by objective `min_bound`")
                        })?,
                    },
                })
            }
            _ => None,
        };

        Ok(RunConfig {
            command,
            spec,
            params,
            iota,
            reps,
            seed,
            out,
            format,
            workers,
            profile,
            objective,
            search,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOUND: &str = r#"
        # the unit Rademacher example
        [spec]
        n = 1
        d = 1
        standardized = true
        family = { kind = "rademacher" }
        covariance = { kind = "identity" }

        [params]
        gamma = 2.0
        delta = 2.0
        iota = 1.0
    "#;

    fn resolve(text: &str, command: Command) -> Result<RunConfig, ResolveError> {
        RunConfig::resolve(
            command,
            parse_file(text).unwrap(),
            (None, None),
            Overrides::default(),
        )
    }

    #[test]
    fn bound_config_resolves() {
        let c = resolve(BOUND, Command::Bound).unwrap();
        assert_eq!(c.params.unwrap().gamma(), 2.0);
        assert_eq!(c.format, Format::Json);
        assert_eq!(c.profile.method, ProfileMethod::Auto);
    }

    #[test]
    fn unknown_keys_name_the_field() {
        let e = parse_file("sede = 3").unwrap_err();
        assert_eq!(e.field, "sede");
        let e = parse_file("seed = 1\n[params]\ngamma = \"two\"\n").unwrap_err();
        assert_eq!(e.field, "params.gamma");
        let e = parse_file("[spec]\nn = 1\nd = 1\nstandardized = true\nfamily = { kind = \"rademacher\" }\ncovariance = { kind = \"identity\" }\nextra = 1").unwrap_err();
        assert_eq!(e.field, "extra");
    }

    #[test]
    fn missing_fields_are_named() {
        let text = BOUND.replace("delta = 2.0", "");
        match resolve(&text, Command::Bound) {
            Err(ResolveError::Config(e)) => assert_eq!(e.field, "params.delta"),
            other => panic!("{other:?}"),
        }
        match resolve(BOUND, Command::Simulate) {
            Err(ResolveError::Config(e)) => assert_eq!(e.field, "seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn domain_errors_are_separate() {
        let text = BOUND.replace("gamma = 2.0", "gamma = 0.25");
        assert!(matches!(
            resolve(&text, Command::Bound),
            Err(ResolveError::Domain(_))
        ));
    }

    #[test]
    fn layering_order() {
        let text = format!("seed = 1\nout = \"file.json\"\n{BOUND}");
        let file = parse_file(&text).unwrap();
        let env = env_overrides(|k| match k {
            ENV_SEED => Some("2".into()),
            ENV_OUT => Some("env.json".into()),
            _ => None,
        })
        .unwrap();
        let c = RunConfig::resolve(
            Command::Bound,
            file.clone(),
            env.clone(),
            Overrides::default(),
        )
        .unwrap();
        assert_eq!(
            (c.seed, c.out.as_deref()),
            (Some(2), Some(Path::new("env.json")))
        );
        let flags = Overrides {
            seed: Some(3),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(Command::Bound, file, env, flags).unwrap();
        assert_eq!(c.seed, Some(3));
        assert!(env_overrides(|k| (k == ENV_SEED).then(|| "x".to_string())).is_err());
    }
}
