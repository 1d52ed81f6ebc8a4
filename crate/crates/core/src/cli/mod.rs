//! The `bnbopt` command line: `run`, `compare` and `verify {variance,envelope}`.
//!
//! Exit codes are 0 on success, 1 on a runtime failure, 2 on a usage error and
//! 3 when a verification ran but its check failed.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ConfigFile, KNOWN_KEYS};
pub use output::termination_name;

use crate::bench::{self, ObjectiveKind, Strategy, Suite};
use crate::bnb::RunConfig;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::lattice::DyadicGrid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Default output root when neither `--out`, `output.dir` nor this variable is set.
pub const OUT_ENV: &str = "BNBOPT_OUT";

/// Variance-slope window accepted by `verify variance`.
pub const SLOPE_RANGE: (f64, f64) = (1.8, 2.2);

/// Largest GP-sample table picked by default.
const DEFAULT_TABLE_POINTS: f64 = 4225.0;

#[derive(Debug, Parser)]
#[command(name = "bnbopt", version, about = "Branch and bound optimization with Gaussian-process confidence bounds")]
pub struct Cli {
    /// Flat `section.key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize one objective and write its trace.
    Run(RunArgs),
    /// Run several strategies over a range of seeds and summarize regret.
    Compare(CompareArgs),
    /// Check a scaling law or the confidence envelope.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
}

#[derive(Debug, Subcommand)]
enum VerifyTarget {
    /// Posterior standard deviation against lattice spacing.
    Variance(VarianceArgs),
    /// Coverage of the confidence envelope over GP-sample objectives.
    Envelope(EnvelopeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    GpSample,
    Quadratic,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

/// `A..B` is inclusive; a bare `N` means the first `N` seeds `0..N-1`.
fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
        if b < a {
            return Err(format!("empty seed range {s}"));
        }
        Ok(SeedList((a..=b).collect()))
    } else {
        let n: u64 = s.parse().map_err(|e| format!("bad seed count `{s}`: {e}"))?;
        if n == 0 {
            return Err("seed count must be positive".into());
        }
        Ok(SeedList((0..n).collect()))
    }
}

#[derive(Debug, Clone)]
struct LevelList(Vec<u32>);

/// `A..B` inclusive or a comma-separated list.
fn parse_levels(s: &str) -> std::result::Result<LevelList, String> {
    let s = s.trim();
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|e| format!("bad level `{a}`: {e}"))?;
        let b: u32 = b.trim().parse().map_err(|e| format!("bad level `{b}`: {e}"))?;
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|e| format!("bad level `{v}`: {e}"))).collect::<std::result::Result<_, _>>()?
    };
    if levels.is_empty() {
        return Err(format!("no levels in `{s}`"));
    }
    Ok(LevelList(levels))
}

#[derive(Debug, Clone, Default, Args)]
struct ProblemArgs {
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    dim: Option<usize>,
    /// `se` or `matern52`.
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// One value (isotropic) or one per dimension.
    #[arg(long, value_delimiter = ',')]
    lengthscale: Option<Vec<f64>>,
    #[arg(long)]
    output_scale: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    upper: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    max_level: Option<u32>,
    /// Lattice level of the GP-sample table.
    #[arg(long)]
    table_level: Option<u32>,
    /// Curvature of the quadratic objective.
    #[arg(long)]
    curvature: Option<f64>,
    /// Gram jitter relative to the output scale.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    beta_scale: Option<f64>,
    #[arg(long, value_enum)]
    half_radius: Option<Switch>,
    /// Output root; results go to `<out>/<experiment-id>/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `A..B` (inclusive) or a count `N` for seeds `0..N-1`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Comma-separated subset of `bnb,ucb,random`.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
}

#[derive(Debug, Args)]
struct VarianceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `A..B` (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<LevelList>,
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Flag, then config-file value, then nothing.
fn layered<T>(flag: Option<T>, cfg: &ConfigFile, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Option<T>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    cfg.get(key)
        .map(|v| parse(v).map_err(|e| Failure::Usage(format!("config {key} = {v}: {e}"))))
        .transpose()
}

fn from_str<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|v| from_str(v.trim())).collect()
}

fn value_enum<T: ValueEnum>(s: &str) -> std::result::Result<T, String> {
    T::from_str(s.trim(), true)
}

/// Command-line flags merged with the configuration file.
#[derive(Debug)]
struct Settings {
    objective: Option<ObjectiveArg>,
    spec: KernelSpec,
    lower: Vec<f64>,
    upper: Vec<f64>,
    config: RunConfig,
    table_level: u32,
    curvature: f64,
    out_root: PathBuf,
}

impl Settings {
    fn resolve(p: &ProblemArgs, cfg: &ConfigFile, default_objective: Option<ObjectiveArg>) -> std::result::Result<Self, Failure> {
        let objective = layered(p.objective, cfg, "objective.kind", value_enum)?.or(default_objective);
        let lower = layered(p.lower.clone(), cfg, "domain.lower", list)?;
        let upper = layered(p.upper.clone(), cfg, "domain.upper", list)?;
        let dim = layered(p.dim, cfg, "domain.dim", from_str)?
            .or(lower.as_ref().map(Vec::len))
            .or(upper.as_ref().map(Vec::len))
            .unwrap_or(1);
        if dim == 0 {
            return Err(Failure::Usage("--dim must be positive".into()));
        }
        let lower = lower.unwrap_or_else(|| vec![0.0; dim]);
        let upper = upper.unwrap_or_else(|| vec![1.0; dim]);
        if lower.len() != dim || upper.len() != dim {
            return Err(Failure::Usage(format!("domain bounds must have {dim} entries")));
        }

        let family = layered(p.kernel, cfg, "kernel.family", from_str)?.unwrap_or(KernelFamily::SquaredExponential);
        let output_scale = layered(p.output_scale, cfg, "kernel.output_scale", from_str)?.unwrap_or(1.0);
        let mut lengthscales = layered(p.lengthscale.clone(), cfg, "kernel.lengthscale", list)?.unwrap_or_else(|| vec![0.3]);
        if lengthscales.len() == 1 {
            lengthscales = vec![lengthscales[0]; dim];
        }
        let spec = KernelSpec::new(family, output_scale, lengthscales).map_err(usage)?;

        let default_max_level = if objective == Some(ObjectiveArg::GpSample) { 8 } else { 16 };
        let defaults = RunConfig::default();
        let config = RunConfig {
            alpha: layered(p.alpha, cfg, "search.alpha", from_str)?.unwrap_or(defaults.alpha),
            max_evaluations: layered(p.budget, cfg, "search.budget", from_str)?.unwrap_or(defaults.max_evaluations),
            jitter: layered(p.jitter, cfg, "search.jitter", from_str)?.unwrap_or(defaults.jitter),
            max_level: layered(p.max_level, cfg, "search.max_level", from_str)?.unwrap_or(default_max_level),
            half_radius: layered(p.half_radius, cfg, "search.half_radius", value_enum)?.map_or(defaults.half_radius, |s| s == Switch::On),
            beta_scale: layered(p.beta_scale, cfg, "search.beta_scale", from_str)?.unwrap_or(defaults.beta_scale),
            ..defaults
        };
        config.validate().map_err(usage)?;

        let table_level = match layered(p.table_level, cfg, "objective.table_level", from_str)? {
            Some(l) => l,
            None => {
                let g = DyadicGrid::new(lower.clone(), upper.clone(), config.max_level).map_err(usage)?;
                (1..=config.max_level).rev().find(|&l| g.size_at(l) <= DEFAULT_TABLE_POINTS).unwrap_or(1)
            }
        };
        let curvature = layered(p.curvature, cfg, "objective.curvature", from_str)?.unwrap_or(1.0);

        let out_root = match layered(p.out.clone(), cfg, "output.dir", |s| Ok(PathBuf::from(s)))? {
            Some(dir) => dir,
            None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("bnbopt-out")),
        };
        Ok(Self { objective, spec, lower, upper, config, table_level, curvature, out_root })
    }

    fn grid(&self) -> Result<DyadicGrid> {
        DyadicGrid::new(self.lower.clone(), self.upper.clone(), self.config.max_level)
    }

    fn suite(&self) -> std::result::Result<Suite, Failure> {
        let kind = match self.objective {
            Some(ObjectiveArg::GpSample) => ObjectiveKind::GpSample { level: self.table_level },
            Some(ObjectiveArg::Quadratic) => ObjectiveKind::Quadratic { curvature: self.curvature },
            Some(ObjectiveArg::Boundary) => ObjectiveKind::Boundary,
            None => return Err(Failure::Usage("--objective is required".into())),
        };
        Ok(Suite { kind, spec: self.spec.clone(), grid: self.grid().map_err(usage)?, config: self.config.clone() })
    }

    fn experiment_dir(&self, id: &str) -> Result<PathBuf> {
        let dir = self.out_root.join(id);
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

pub fn main() -> i32 {
    main_from(std::env::args_os())
}

/// Parse `args` (including the program name), execute, and return the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: Cli) -> std::result::Result<i32, Failure> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(usage)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args, &cfg),
        Command::Compare(args) => cmd_compare(&args, &cfg),
        Command::Verify { target: VerifyTarget::Variance(args) } => cmd_verify_variance(&args, &cfg),
        Command::Verify { target: VerifyTarget::Envelope(args) } => cmd_verify_envelope(&args, &cfg),
    }
}

fn objective_name(s: &Settings) -> &'static str {
    match s.objective {
        Some(ObjectiveArg::GpSample) => "gp-sample",
        Some(ObjectiveArg::Quadratic) => "quadratic",
        Some(ObjectiveArg::Boundary) => "boundary",
        None => "none",
    }
}

fn cmd_run(args: &RunArgs, cfg: &ConfigFile) -> std::result::Result<i32, Failure> {
    let settings = Settings::resolve(&args.problem, cfg, None)?;
    let suite = settings.suite()?;
    let seed = layered(args.seed, cfg, "search.seed", from_str)?.unwrap_or(0);
    let strategy = layered(args.strategy, cfg, "search.strategy", from_str)?.unwrap_or(Strategy::Bnb);

    let start = Instant::now();
    let outcome = suite.run(strategy, seed)?;
    let wall = start.elapsed().as_secs_f64();

    let dir = run_dir(&settings.out_root, objective_name(&settings), strategy, settings.lower.len(), seed);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    output::write_trace(&dir.join("trace.csv"), &outcome.trace, &outcome.regret, false)?;
    output::write_iterations(&dir.join("iterations.csv"), &outcome.trace)?;
    println!(
        "{strategy} on {}: T={} final_regret={} termination={} wall_time={wall:.3}s out={}",
        objective_name(&settings),
        outcome.trace.len(),
        outcome.regret.final_simple().unwrap_or(f64::NAN),
        termination_name(outcome.trace.termination),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_compare(args: &CompareArgs, cfg: &ConfigFile) -> std::result::Result<i32, Failure> {
    let settings = Settings::resolve(&args.problem, cfg, Some(ObjectiveArg::GpSample))?;
    let suite = settings.suite()?;
    let seeds = match &args.seeds {
        Some(s) => s.0.clone(),
        None => layered(None, cfg, "search.seeds", |s| parse_seeds(s).map(|l| l.0))?.unwrap_or_else(|| (0..20).collect()),
    };
    let strategies = layered(args.strategies.clone(), cfg, "compare.strategies", list)?.unwrap_or_else(|| Strategy::ALL.to_vec());
    let mut unique = strategies.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != strategies.len() {
        return Err(Failure::Usage("--strategies lists a strategy twice".into()));
    }

    let outcomes = bench::compare(&suite, &strategies, &seeds)?;
    let dir = settings.experiment_dir(&format!("compare-{}-d{}", objective_name(&settings), settings.lower.len()))?;
    for o in &outcomes {
        let path = dir.join(format!("trace-{}-seed{}.csv", o.strategy, o.seed));
        output::write_trace(&path, &o.trace, &o.regret, true)?;
    }
    let summaries = bench::summarize(&outcomes, settings.config.max_evaluations);
    output::write_summary(&dir.join("summary.csv"), &summaries)?;
    for s in &summaries {
        println!(
            "{}: runs={} median_final_regret={} median_cumulative_regret={} fitted={}",
            s.strategy, s.runs, s.median_final_simple_regret, s.median_final_cumulative_regret, s.fitted_runs
        );
    }
    println!("out={}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_verify_variance(args: &VarianceArgs, cfg: &ConfigFile) -> std::result::Result<i32, Failure> {
    let settings = Settings::resolve(&args.problem, cfg, None)?;
    let levels = match &args.levels {
        Some(l) => l.0.clone(),
        None => layered(None, cfg, "verify.levels", |s| parse_levels(s).map(|l| l.0))?.unwrap_or_else(|| (1..=5).collect()),
    };
    let table = bench::variance_bound_experiment(&settings.spec, &settings.lower, &settings.upper, &levels)?;
    let prior = settings.spec.output_scale().sqrt();
    let slope_ok = table.slope.is_some_and(|s| (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&s));
    let passed = slope_ok
        && table.failure.is_none()
        && table.strictly_decreasing()
        && table.rows.iter().all(|r| r.sup_sigma <= prior);

    let dir = settings.experiment_dir(&format!("verify-variance-{}-d{}", settings.spec.family(), settings.lower.len()))?;
    output::write_variance(&dir, &table, passed)?;
    for r in &table.rows {
        println!("level={} delta={} sup_sigma={} bound={}", r.level, r.delta, r.sup_sigma, r.bound);
    }
    if let Some(f) = &table.failure {
        println!("stopped early: {f}");
    }
    println!(
        "slope={} required=[{}, {}] {} out={}",
        table.slope.map_or("n/a".to_string(), |s| s.to_string()),
        SLOPE_RANGE.0,
        SLOPE_RANGE.1,
        if passed { "PASS" } else { "FAIL" },
        dir.display()
    );
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_verify_envelope(args: &EnvelopeArgs, cfg: &ConfigFile) -> std::result::Result<i32, Failure> {
    let settings = Settings::resolve(&args.problem, cfg, Some(ObjectiveArg::GpSample))?;
    let seeds = match &args.seeds {
        Some(s) => s.0.clone(),
        None => layered(None, cfg, "search.seeds", |s| parse_seeds(s).map(|l| l.0))?.unwrap_or_else(|| (0..200).collect()),
    };
    if seeds.len() < bench::MIN_ENVELOPE_SEEDS {
        return Err(Failure::Usage(format!("--seeds must name at least {} seeds", bench::MIN_ENVELOPE_SEEDS)));
    }
    let level = settings.table_level;
    let grid = DyadicGrid::new(settings.lower.clone(), settings.upper.clone(), level.max(1)).map_err(usage)?;
    let report = bench::envelope_experiment(&settings.spec, &grid, level, &settings.config, &seeds)?;
    let passed = report.coverage() >= report.threshold();

    let dir = settings.experiment_dir(&format!("verify-envelope-{}-d{}", settings.spec.family(), settings.lower.len()))?;
    output::write_envelope(&dir, &report, passed)?;
    println!(
        "coverage={} threshold={} retention={} unexplained_losses={} {} out={}",
        report.coverage(),
        report.threshold(),
        report.retention(),
        report.unexplained_losses(),
        if passed { "PASS" } else { "FAIL" },
        dir.display()
    );
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Directory `run` writes to for the given objective, strategy, dimension and seed.
pub fn run_dir(out: &Path, objective: &str, strategy: Strategy, dim: usize, seed: u64) -> PathBuf {
    out.join(format!("run-{objective}-{strategy}-d{dim}-seed{seed}"))
}
