use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::basis;
use crate::model::{check_conditions, ConditionReport, EnvDistribution, DEFAULT_EPSILON};
use crate::spectral::{default_grid, lambda_prime, solve_default, SpectralSolution, DEFAULT_H};
use crate::stats::run_replicas;
use crate::tilt::sample_path;

use super::survival::{csv_error, finish_csv};
use super::{
    diagnostics, fit_c, fmt_f64, phi_estimate, properness_probe, survival_curve, CFit, DiagnosticsOptions,
    PhiSchedule, ProperProbe, SurvivalSchedule,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "BPRELAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bprelab", version, about = "Branching processes in random environment: survival asymptotics lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Environment description (JSON).
    #[arg(long)]
    pub env: PathBuf,
    /// Master seed; required by the stochastic commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid nodes per simplex edge for the transfer operator.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Type of the single initial particle (0-based).
    #[arg(long = "type", default_value_t = 0)]
    pub initial_type: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing conditions and strong subcriticality.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Level of the lower-tail bound in the first condition.
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Survival probabilities, exact for small n and importance-sampled beyond.
    Survival {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest importance-sampling horizon.
        #[arg(long, default_value_t = 60)]
        n: usize,
        /// Largest exact horizon.
        #[arg(long, default_value_t = 10)]
        exact_max: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        /// Rows averaged by the fit of the constant.
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Run even if the conditions fail.
        #[arg(long)]
        force: bool,
    },
    /// Conditional generating function of the surviving population.
    Phi {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluation point as comma-separated coordinates; repeatable.
        /// Defaults to 0.5 in every coordinate.
        #[arg(long = "s")]
        points: Vec<String>,
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        exact_max: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        /// Largest horizon cross-checked by direct simulation.
        #[arg(long, default_value_t = 5)]
        mc_max: usize,
        #[arg(long, default_value_t = 100_000)]
        mc_reps: usize,
        #[arg(long)]
        force: bool,
    },
    /// Spectral triple of the transfer operator and the derivative of log λ.
    Spectral {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated exponents.
        #[arg(long, default_value = "1")]
        theta: String,
        /// Step of the central difference.
        #[arg(long, default_value_t = DEFAULT_H)]
        h: f64,
    },
    /// Paths of the tilted environment chain.
    TiltSample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Number of paths.
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
    /// Bound sweeps, identity checks and convergence diagnostics as JSON.
    Diagnostics {
        #[command(flatten)]
        common: CommonArgs,
        /// Random cases per sweep.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        /// Horizon of the Lyapunov estimates.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Replicas of the Lyapunov estimates.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
    },
}

/// Validated parameters of one command.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: &'static str,
    pub env: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: Option<usize>,
    pub initial_type: usize,
    pub task: Task,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Check { epsilon: f64 },
    Survival { schedule: SurvivalSchedule, window: usize, force: bool },
    Phi { points: Vec<Vec<f64>>, schedule: PhiSchedule, force: bool },
    Spectral { theta: Vec<f64>, h: f64 },
    TiltSample { theta: f64, n: usize, reps: usize },
    Diagnostics { options: DiagnosticsOptions },
}

fn parse_point(text: &str, k: usize) -> Result<Vec<f64>> {
    text.split(',')
        .enumerate()
        .map(|(j, v)| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::input(format!("--s[{k}][{j}]"), format!("{v:?}: {e}")))
        })
        .collect()
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::input(name, "must be positive"));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let (command, common, task, stochastic) = match cli.command {
            Command::Check { common, epsilon } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return Err(Error::input("--epsilon", format!("{epsilon} outside (0, 1]")));
                }
                ("check", common, Task::Check { epsilon }, false)
            }
            Command::Survival {
                common,
                n,
                exact_max,
                reps,
                window,
                force,
            } => {
                let schedule = SurvivalSchedule {
                    exact_max,
                    is_max: n,
                    reps: positive("--reps", reps)?,
                    ..SurvivalSchedule::default()
                };
                let task = Task::Survival {
                    schedule,
                    window: positive("--window", window)?,
                    force,
                };
                ("survival", common, task, true)
            }
            Command::Phi {
                common,
                points,
                n,
                exact_max,
                reps,
                mc_max,
                mc_reps,
                force,
            } => {
                let points = points
                    .iter()
                    .enumerate()
                    .map(|(k, t)| parse_point(t, k))
                    .collect::<Result<Vec<_>>>()?;
                let schedule = PhiSchedule {
                    exact_max,
                    is_max: n,
                    reps: positive("--reps", reps)?,
                    mc_max,
                    mc_reps: positive("--mc-reps", mc_reps)?,
                    ..PhiSchedule::default()
                };
                ("phi", common, Task::Phi { points, schedule, force }, true)
            }
            Command::Spectral { common, theta, h } => {
                let theta = theta
                    .split(',')
                    .map(|v| {
                        let t: f64 = v
                            .trim()
                            .parse()
                            .map_err(|e| Error::input("--theta", format!("{v:?}: {e}")))?;
                        if !(t > h) {
                            return Err(Error::input("--theta", format!("θ = {t} must exceed h = {h}")));
                        }
                        Ok(t)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if !(h > 0.0) {
                    return Err(Error::input("--h", "must be positive"));
                }
                ("spectral", common, Task::Spectral { theta, h }, false)
            }
            Command::TiltSample { common, theta, n, reps } => {
                if !(theta > 0.0) {
                    return Err(Error::input("--theta", "must be positive"));
                }
                ("tilt-sample", common, Task::TiltSample { theta, n, reps }, true)
            }
            Command::Diagnostics { common, cases, n, reps } => {
                let options = DiagnosticsOptions {
                    cases: positive("--cases", cases)?,
                    lyapunov_n: positive("--n", n)?,
                    lyapunov_reps: positive("--reps", reps)?,
                    grid: common.grid,
                    ..DiagnosticsOptions::default()
                };
                ("diagnostics", common, Task::Diagnostics { options }, true)
            }
        };
        if stochastic && common.seed.is_none() {
            return Err(Error::input("--seed", format!("`{command}` is stochastic and needs a seed")));
        }
        if let Some(k) = common.grid {
            positive("--grid", k)?;
        }
        Ok(Self {
            command,
            env: common.env,
            seed: common.seed,
            out: common.out,
            grid: common.grid,
            initial_type: common.initial_type,
            task,
        })
    }

    fn seed(&self) -> u64 {
        self.seed.expect("seed checked during validation")
    }

    fn grid_for(&self, p: usize) -> usize {
        self.grid.unwrap_or_else(|| default_grid(p))
    }

    fn load_env(&self) -> Result<EnvDistribution> {
        let env = EnvDistribution::from_path(&self.env)?;
        if self.initial_type >= env.p() {
            return Err(Error::input(
                "--type",
                format!("type {} out of range (p = {})", self.initial_type, env.p()),
            ));
        }
        Ok(env)
    }
}

/// Result of `check`: conditions, `λ(1)`, `Λ′(1)` and the overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutput {
    pub conditions: ConditionReport,
    pub lambda1: Option<f64>,
    pub lambda_prime1: Option<f64>,
    pub strongly_subcritical: bool,
    pub failures: Vec<String>,
    pub pass: bool,
}

pub fn cmd_check(env: &EnvDistribution, epsilon: f64, grid: usize) -> CheckOutput {
    let conditions = check_conditions(env, epsilon);
    let mut failures: Vec<String> = conditions.failures().iter().map(|f| format!("{f} fails")).collect();
    let spectral = if env.p() <= 3 {
        solve_default(env, 1.0, grid).and_then(|s| Ok((s.lambda, lambda_prime(env, 1.0, DEFAULT_H, grid)?)))
    } else {
        Err(Error::NotApplicable(format!("transfer operator needs p ≤ 3, got {}", env.p())))
    };
    let (lambda1, lambda_prime1) = match spectral {
        Ok((l, d)) => (Some(l), Some(d)),
        Err(e) => {
            failures.push(format!("spectral solve: {e}"));
            (None, None)
        }
    };
    let strongly_subcritical = lambda_prime1.is_some_and(|d| d < 0.0);
    if lambda_prime1.is_some() && !strongly_subcritical {
        failures.push("Λ′(1) ≥ 0".into());
    }
    CheckOutput {
        pass: failures.is_empty(),
        conditions,
        lambda1,
        lambda_prime1,
        strongly_subcritical,
        failures,
    }
}

fn require_conditions(env: &EnvDistribution, grid: usize, force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let check = cmd_check(env, DEFAULT_EPSILON, grid);
    if check.pass {
        return Ok(());
    }
    Err(Error::input("env", format!("{}; pass --force to run anyway", check.failures.join(", "))))
}

fn spec_at_one(env: &EnvDistribution, grid: usize) -> Result<SpectralSolution> {
    solve_default(env, 1.0, grid)
}

#[derive(Debug, Serialize)]
struct Metadata<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    lambda1: f64,
    notes: &'static [&'static str],
    #[serde(flatten)]
    extra: T,
}

#[derive(Debug, Serialize)]
struct SurvivalExtra {
    fit: Option<CFit>,
    fit_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct PhiExtra {
    /// `Φ̂` near `s = 1` at the largest tilted horizon.
    properness: Option<ProperProbe>,
}

/// Output of one command: the main payload and an optional sidecar that is
/// written next to `--out` as `<out>.meta.json`.
struct Output {
    body: String,
    meta: Option<String>,
}

fn spectral_csv(sols: &[(SpectralSolution, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "theta",
        "lambda",
        "log_lambda",
        "lambda_prime",
        "iterations",
        "residual",
        "adjoint_residual",
        "min_r",
        "grid",
    ])
    .map_err(csv_error)?;
    for (s, d) in sols {
        w.write_record([
            fmt_f64(s.theta),
            fmt_f64(s.lambda),
            fmt_f64(s.log_lambda()),
            fmt_f64(*d),
            s.iterations.to_string(),
            fmt_f64(s.residual),
            fmt_f64(s.adjoint_residual),
            fmt_f64(s.min_r()),
            s.grid.resolution().to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

fn tilt_csv(env: &EnvDistribution, config: &ExperimentConfig, theta: f64, n: usize, reps: usize) -> Result<String> {
    let p = env.p();
    let spec = solve_default(env, theta, config.grid_for(p))?;
    let x0 = basis(p, config.initial_type);
    let paths = run_replicas(config.seed(), reps, |rng| sample_path(env, &spec, &x0, n, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path".to_string(), "k".to_string(), "atom".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    header.push("log_density".into());
    w.write_record(&header).map_err(csv_error)?;
    for (id, path) in paths.iter().enumerate() {
        let mut log_density = 0.0;
        for (k, x) in path.directions.iter().enumerate() {
            let atom = if k == 0 {
                String::new()
            } else {
                let e = path.atom_indices[k - 1];
                log_density += crate::tilt::weight(&path.directions[k - 1], env.atom(e), &spec)?.ln();
                e.to_string()
            };
            let mut rec = vec![id.to_string(), k.to_string(), atom];
            rec.extend(x.iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(log_density));
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    finish_csv(w)
}

const CRN_NOTE: &[&str] = &[
    "is rows share one set of tilted paths across all horizons (common random numbers)",
    "phi numerator and denominator are evaluated on the same paths",
];

fn execute(config: &ExperimentConfig) -> Result<(Output, i32)> {
    let env = config.load_env()?;
    let grid = config.grid_for(env.p());
    let i = config.initial_type;
    match &config.task {
        Task::Check { epsilon } => {
            let out = cmd_check(&env, *epsilon, grid);
            for f in &out.failures {
                eprintln!("check: {f}");
            }
            let code = if out.pass { 0 } else { 1 };
            Ok((
                Output {
                    body: serde_json::to_string_pretty(&out)? + "\n",
                    meta: None,
                },
                code,
            ))
        }
        Task::Survival { schedule, window, force } => {
            require_conditions(&env, grid, *force)?;
            let spec = spec_at_one(&env, grid)?;
            let curve = survival_curve(&env, &spec, i, schedule, config.seed())?;
            let extra = match fit_c(&curve, *window) {
                Ok(fit) => {
                    eprintln!(
                        "c^{i} = {} ± {} (n = {}..={})",
                        fmt_f64(fit.c),
                        fmt_f64(fit.std_error),
                        fit.n_first,
                        fit.n_last
                    );
                    SurvivalExtra {
                        fit: Some(fit),
                        fit_error: None,
                    }
                }
                Err(e) => {
                    eprintln!("c^{i} not fitted: {e}");
                    SurvivalExtra {
                        fit: None,
                        fit_error: Some(e.to_string()),
                    }
                }
            };
            let meta = Metadata {
                config,
                lambda1: spec.lambda,
                notes: &CRN_NOTE[..1],
                extra,
            };
            Ok((
                Output {
                    body: curve.to_csv()?,
                    meta: Some(serde_json::to_string_pretty(&meta)? + "\n"),
                },
                0,
            ))
        }
        Task::Phi { points, schedule, force } => {
            require_conditions(&env, grid, *force)?;
            let spec = spec_at_one(&env, grid)?;
            let points = if points.is_empty() {
                vec![vec![0.5; env.p()]]
            } else {
                points.clone()
            };
            let est = phi_estimate(&env, &spec, i, &points, schedule, config.seed())?;
            let properness = match schedule.is_max {
                0 => None,
                n => Some(properness_probe(&env, &spec, i, n, schedule.reps, config.seed())?),
            };
            let meta = Metadata {
                config,
                lambda1: spec.lambda,
                notes: CRN_NOTE,
                extra: PhiExtra { properness },
            };
            Ok((
                Output {
                    body: est.to_csv()?,
                    meta: Some(serde_json::to_string_pretty(&meta)? + "\n"),
                },
                0,
            ))
        }
        Task::Spectral { theta, h } => {
            if env.p() > 3 {
                return Err(Error::input("env", format!("transfer operator needs p ≤ 3, got {}", env.p())));
            }
            let sols = theta
                .par_iter()
                .map(|&t| Ok((solve_default(&env, t, grid)?, lambda_prime(&env, t, *h, grid)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                Output {
                    body: spectral_csv(&sols)?,
                    meta: None,
                },
                0,
            ))
        }
        Task::TiltSample { theta, n, reps } => Ok((
            Output {
                body: tilt_csv(&env, config, *theta, *n, *reps)?,
                meta: None,
            },
            0,
        )),
        Task::Diagnostics { options } => {
            let report = diagnostics(&env, options, config.seed());
            if !report.pass {
                eprintln!("diagnostics: some checks failed");
            }
            Ok((
                Output {
                    body: serde_json::to_string_pretty(&report)? + "\n",
                    meta: None,
                },
                0,
            ))
        }
    }
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_output(config: &ExperimentConfig, output: &Output) -> Result<()> {
    match &config.out {
        Some(path) => {
            std::fs::write(path, &output.body)?;
            if let Some(meta) = &output.meta {
                std::fs::write(meta_path(path), meta)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(output.body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::input(THREADS_VAR, format!("{v:?} is not a positive integer"))),
        },
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = ExperimentConfig::from_cli(cli).and_then(|config| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count()?.unwrap_or(0))
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        pool.install(|| {
            let (output, code) = execute(&config)?;
            write_output(&config, &output)?;
            Ok(code)
        })
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
