use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use maxcorr::gaussian::{
    brenier_map_gaussian, comonotone_cross_cov, matrix_rows, max_corr_gaussian,
    push_forward_residual, GaussianSummary,
};
use maxcorr::io::{read_matrix_file, read_points_file};
use maxcorr::oracle::{max_corr_assignment, structure_neutrality_probe};
use maxcorr::risk::{convex_measure, expected_shortfall_mv, MaxCorrelation, Risk, RiskSolver, ScenarioFamily};
use maxcorr::suite::{run_suite, SuiteKind};
use maxcorr::transport::{partition_rows, tatonnement_with, TraceEntry};
use maxcorr::{sample_baseline, BaselineMeasure, DualWeights, Error, Result, SolveConfig, StepRule};

use crate::baseline::{BaselineArgs, ScenarioSpec};

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "MAXCORR_SEED";

#[derive(Debug, Parser)]
#[command(name = "maxcorr", version, about = "Maximal correlation risk measures")]
pub struct Cli {
    /// Omit the run metadata block (version, start time, elapsed time).
    #[arg(long, global = true)]
    pub no_meta: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gaussian closed form and Brenier map.
    Gaussian(GaussianArgs),
    /// Semi-discrete transport from a baseline to a discrete target.
    Solve(SolveArgs),
    /// Multivariate expected shortfall of a discrete target.
    Es(EsArgs),
    /// Penalized maximum over a family of baseline scenarios.
    Convex(ConvexArgs),
    /// Exact discrete maximal correlation between two point sets.
    Assign(AssignArgs),
    /// Search for a rearrangement beating `ρ(A) + ρ(B)`.
    Probe(ProbeArgs),
    /// Property suites on generated instances.
    Check(CheckArgs),
}

pub enum Outcome {
    Success,
    NotConverged,
    ChecksFailed,
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    #[arg(long, value_name = "FILE")]
    sigma_u: PathBuf,
    #[arg(long, value_name = "FILE")]
    sigma_x: PathBuf,
    #[arg(long, value_name = "FILE", requires = "cross")]
    sigma_y: Option<PathBuf>,
    /// Emit the comonotone cross-covariance of X and Y.
    #[arg(long, requires = "sigma_y")]
    cross: bool,
}

/// Solver settings shared by the transport-backed commands.
#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Monte Carlo sample size.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stopping threshold on the cell-mass residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// `fixed:EPS`, `decay:EPS0:EXPONENT`, `adaptive[:EPS0[:SHRINK:GROW]]` or
    /// `bb[:EPS0[:MEMORY]]`.
    #[arg(long)]
    step: Option<String>,
    /// Draw a fresh sample at every iteration.
    #[arg(long)]
    resample: bool,
    /// JSON solver configuration; explicit flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    baseline: BaselineArgs,
    /// Point CSV of the target distribution.
    #[arg(long, value_name = "FILE")]
    target: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Write sampled points with their cell index as CSV.
    #[arg(long, value_name = "FILE")]
    dump_partition: Option<PathBuf>,
    /// Write the accepted iterates as CSV.
    #[arg(long, value_name = "FILE")]
    dump_trace: Option<PathBuf>,
    /// Log every iteration to stderr.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Debug, Args)]
pub struct EsArgs {
    #[arg(long, value_name = "FILE")]
    target: PathBuf,
    #[arg(long)]
    alpha: f64,
}

#[derive(Debug, Args)]
pub struct ConvexArgs {
    #[arg(long, value_name = "FILE")]
    target: PathBuf,
    /// JSON list of scenarios: `baseline`, `penalty` and baseline parameters.
    #[arg(long, value_name = "FILE")]
    scenarios: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long, value_name = "FILE")]
    source: PathBuf,
    #[arg(long, value_name = "FILE")]
    target: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_name = "FILE")]
    source: PathBuf,
    #[arg(long, value_name = "FILE")]
    a: PathBuf,
    #[arg(long, value_name = "FILE")]
    b: PathBuf,
    /// Random pairings to try; 0 enumerates all of them.
    #[arg(long, default_value_t = 0)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    suite: SuiteKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Multiplies every tolerance; used to exercise the failure path.
    #[arg(long, default_value_t = 1.0, hide = true)]
    tolerance_scale: f64,
}

#[derive(Serialize)]
struct Meta {
    version: &'static str,
    started_unix: u64,
    elapsed_seconds: f64,
}

struct Emitter {
    no_meta: bool,
    started: Instant,
    started_unix: u64,
}

impl Emitter {
    fn emit<T: Serialize>(&self, body: &T) -> Result<()> {
        let mut value = serde_json::to_value(body).map_err(|e| Error::Numerical(e.to_string()))?;
        if !self.no_meta {
            let meta = Meta {
                version: env!("CARGO_PKG_VERSION"),
                started_unix: self.started_unix,
                elapsed_seconds: self.started.elapsed().as_secs_f64(),
            };
            if let Value::Object(map) = &mut value {
                map.insert("meta".into(), serde_json::to_value(meta).expect("meta serializes"));
            }
        }
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut out = std::io::stdout().lock();
        match writeln!(out, "{text}").and_then(|()| out.flush()) {
            // a closed pipe downstream is not an error of ours
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => Ok(other?),
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let emitter = Emitter {
        no_meta: cli.no_meta,
        started: Instant::now(),
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    match cli.command {
        Command::Gaussian(args) => gaussian(&args, &emitter),
        Command::Solve(args) => solve(&args, &emitter),
        Command::Es(args) => es(&args, &emitter),
        Command::Convex(args) => convex(&args, &emitter),
        Command::Assign(args) => assign(&args, &emitter),
        Command::Probe(args) => probe(&args, &emitter),
        Command::Check(args) => check(&args, &emitter),
    }
}

fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{SEED_ENV}=`{text}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn gaussian(args: &GaussianArgs, emitter: &Emitter) -> Result<Outcome> {
    let sigma_u = read_matrix_file(&args.sigma_u)?;
    let sigma_x = read_matrix_file(&args.sigma_x)?;
    let rho = max_corr_gaussian(&sigma_u, &sigma_x)?;
    let a_x = brenier_map_gaussian(&sigma_u, &sigma_x)?;
    let cross_cov = match (&args.sigma_y, args.cross) {
        (Some(path), true) => {
            let sigma_y = read_matrix_file(path)?;
            Some(matrix_rows(&comonotone_cross_cov(&sigma_u, &sigma_x, &sigma_y)?))
        }
        _ => None,
    };
    emitter.emit(&GaussianSummary {
        rho,
        a_x_residual: push_forward_residual(&a_x, &sigma_u, &sigma_x),
        dims: sigma_u.dim(),
        cross_cov,
    })?;
    Ok(Outcome::Success)
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    text.parse()
        .map_err(|_| Error::Parse(format!("--step: `{text}` is not a number for {what}")))
}

const BB_MEMORY: usize = 10;

fn parse_step(text: &str) -> Result<StepRule> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["fixed", eps] => Ok(StepRule::Fixed {
            epsilon: parse_f64(eps, "epsilon")?,
        }),
        ["decay", eps, exponent] => Ok(StepRule::Decay {
            epsilon0: parse_f64(eps, "epsilon0")?,
            exponent: parse_f64(exponent, "exponent")?,
        }),
        ["adaptive"] => Ok(StepRule::default()),
        ["adaptive", eps] => Ok(StepRule::AdaptiveBacktracking {
            epsilon0: Some(parse_f64(eps, "epsilon0")?),
            shrink: 0.5,
            grow: 1.1,
        }),
        ["adaptive", eps, shrink, grow] => Ok(StepRule::AdaptiveBacktracking {
            epsilon0: if eps.is_empty() {
                None
            } else {
                Some(parse_f64(eps, "epsilon0")?)
            },
            shrink: parse_f64(shrink, "shrink")?,
            grow: parse_f64(grow, "grow")?,
        }),
        ["bb"] => Ok(StepRule::BarzilaiBorwein {
            epsilon0: None,
            memory: BB_MEMORY,
        }),
        ["bb", eps] => Ok(StepRule::BarzilaiBorwein {
            epsilon0: Some(parse_f64(eps, "epsilon0")?),
            memory: BB_MEMORY,
        }),
        ["bb", eps, memory] => Ok(StepRule::BarzilaiBorwein {
            epsilon0: if eps.is_empty() {
                None
            } else {
                Some(parse_f64(eps, "epsilon0")?)
            },
            memory: memory
                .parse()
                .map_err(|_| Error::Parse(format!("--step: `{memory}` is not a count for memory")))?,
        }),
        _ => Err(Error::Parse(format!(
            "--step `{text}`: expected fixed:EPS, decay:EPS0:EXPONENT, adaptive[:EPS0[:SHRINK:GROW]] or bb[:EPS0[:MEMORY]]"
        ))),
    }
}

/// Defaults, then the seed variable, then the config file, then flags.
fn solve_config(flags: &SolverFlags) -> Result<SolveConfig> {
    let base = SolveConfig {
        seed: default_seed()?,
        ..SolveConfig::default()
    };
    let mut cfg = match &flags.config {
        None => base,
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let Value::Object(overlay) = overlay else {
                return Err(Error::Parse(format!("{}: expected a JSON object", path.display())));
            };
            let mut merged = serde_json::to_value(&base).expect("config serializes");
            let fields = merged.as_object_mut().expect("config is an object");
            for (key, value) in overlay {
                if !fields.contains_key(&key) {
                    return Err(Error::Parse(format!("{}: unknown field `{key}`", path.display())));
                }
                fields.insert(key, value);
            }
            serde_json::from_value(merged).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(n) = flags.samples {
        cfg.sample_count = n;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = flags.tol {
        cfg.tol_residual = tol;
    }
    if let Some(iters) = flags.max_iters {
        cfg.max_iters = iters;
    }
    if let Some(step) = &flags.step {
        cfg.step_rule = parse_step(step)?;
    }
    if flags.resample {
        cfg.resample_each_iter = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "iter,objective,residual,step")?;
    for t in trace {
        writeln!(out, "{},{},{},{}", t.iteration, t.objective, t.residual, t.step)?;
    }
    out.flush()?;
    Ok(())
}

fn write_partition(path: &Path, rows: &[(Vec<f64>, usize)], dim: usize) -> Result<()> {
    let mut out = create(path)?;
    let header: Vec<String> = (1..=dim).map(|i| format!("u{i}")).chain(["cell".into()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (u, cell) in rows {
        for x in u {
            write!(out, "{x},")?;
        }
        writeln!(out, "{cell}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput<T: Serialize> {
    baseline: &'static str,
    method: Value,
    rho: f64,
    #[serde(flatten)]
    detail: T,
}

fn solve(args: &SolveArgs, emitter: &Emitter) -> Result<Outcome> {
    let target = read_points_file(&args.target)?.into_distribution()?;
    let baseline = args.baseline.build(target.dim())?;
    let cfg = solve_config(&args.solver)?;
    if !baseline.is_continuous() {
        if args.dump_partition.is_some() || args.dump_trace.is_some() {
            return Err(Error::Parse(format!(
                "dumps need a continuous baseline; the {} baseline is solved exactly",
                baseline.name()
            )));
        }
        let name = baseline.name();
        return match baseline {
            BaselineMeasure::Empirical(source) => {
                let result = max_corr_assignment(&source, &target)?;
                emitter.emit(&SolveOutput {
                    baseline: name,
                    method: serde_json::to_value(result.method).expect("method serializes"),
                    rho: result.value,
                    detail: serde_json::json!({ "coupling": result.coupling }),
                })?;
                Ok(Outcome::Success)
            }
            other => {
                let rho = MaxCorrelation::new(other, cfg)?.rho(&Risk::from(target))?;
                emitter.emit(&SolveOutput {
                    baseline: name,
                    method: "sum-quantile".into(),
                    rho,
                    detail: serde_json::json!({}),
                })?;
                Ok(Outcome::Success)
            }
        };
    }
    let verbose = args.verbose;
    let report = tatonnement_with(&baseline, &target, &cfg, &DualWeights::zeros(target.len()), |t| {
        if verbose {
            eprintln!(
                "iter {} objective {:.12e} residual {:.6e} step {:.6e}",
                t.iteration, t.objective, t.residual, t.step
            );
        }
    })?;
    if let Some(path) = &args.dump_trace {
        write_trace(path, &report.trace)?;
    }
    if let Some(path) = &args.dump_partition {
        let cloud = sample_baseline(&baseline, cfg.sample_count, cfg.seed)?;
        write_partition(path, &partition_rows(&report.weights, &target, &cloud)?, target.dim())?;
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    emitter.emit(&SolveOutput {
        baseline: baseline.name(),
        method: "semi-discrete".into(),
        rho: report.risk_value,
        detail: &report,
    })?;
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

fn es(args: &EsArgs, emitter: &Emitter) -> Result<Outcome> {
    let target = read_points_file(&args.target)?.into_distribution()?;
    emitter.emit(&expected_shortfall_mv(&target, args.alpha)?)?;
    Ok(Outcome::Success)
}

fn convex(args: &ConvexArgs, emitter: &Emitter) -> Result<Outcome> {
    let target = read_points_file(&args.target)?.into_distribution()?;
    let cfg = solve_config(&args.solver)?;
    let text = std::fs::read_to_string(&args.scenarios)?;
    let specs: Vec<ScenarioSpec> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.scenarios.display())))?;
    let entries = specs
        .iter()
        .map(|s| Ok((s.build(target.dim())?, s.penalty)))
        .collect::<Result<Vec<_>>>()?;
    let family = ScenarioFamily::new(entries)?;
    emitter.emit(&convex_measure(&Risk::from(target), &family, &cfg)?)?;
    Ok(Outcome::Success)
}

fn assign(args: &AssignArgs, emitter: &Emitter) -> Result<Outcome> {
    let source = read_points_file(&args.source)?.into_distribution()?;
    let target = read_points_file(&args.target)?.into_distribution()?;
    emitter.emit(&max_corr_assignment(&source, &target)?)?;
    Ok(Outcome::Success)
}

fn probe(args: &ProbeArgs, emitter: &Emitter) -> Result<Outcome> {
    let source = read_points_file(&args.source)?.rows;
    let a = read_points_file(&args.a)?.rows;
    let b = read_points_file(&args.b)?.rows;
    let seed = match args.seed {
        Some(s) => s,
        None => default_seed()?,
    };
    emitter.emit(&structure_neutrality_probe(&source, &a, &b, args.trials, seed)?)?;
    Ok(Outcome::Success)
}

fn check(args: &CheckArgs, emitter: &Emitter) -> Result<Outcome> {
    let seed = match args.seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let report = run_suite(args.suite, seed, args.trials, args.tolerance_scale)?;
    emitter.emit(&report)?;
    Ok(if report.passed {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    })
}
