//! Batch command-line front end.
//!
//! Exit codes: 0 ok, 1 parse error, 2 assumption violation, 3 solver did
//! not converge, 4 artifact mismatch, 5 verification failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, Config};
use crate::hybridsim::{evaluate_cost, simulate, Policy, PolicyParams, SimError};
use crate::io::{read_value_csv, write_history_csv, write_trajectory_csv, write_value_csv, IoError};
use crate::operators::{isaacs_gap, HamiltonianVariant, SchemeError, SemiLagrangian};
use crate::problem::{check_y1_y2, lipschitz_probe, validate_a2, ProblemSpec, ValidationReport};
use crate::report::{fmt_f64, KeyValues};
use crate::solver::{
    default_dt, dt_warning, solve_with, GridSpec, Init, SolverConfig, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};
use crate::verify::{run_checks, Suite, VerifyOptions};

pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 1;
    pub const ASSUMPTION: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const MISMATCH: i32 = 4;
    pub const VERIFICATION: i32 = 5;
}

pub const DEFAULT_SAMPLES: usize = 512;
pub const DEFAULT_COSTATE_SAMPLES: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "hybrid-isaacs", version, about = "Zero-sum hybrid differential games with switching and impulses")]
pub struct Cli {
    /// Cap on worker threads for grid sweeps.
    #[arg(long, global = true, env = "HYBRID_ISAACS_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions of a problem file.
    Validate(ValidateArgs),
    /// Compute the value field by fixed-point iteration.
    Solve(SolveArgs),
    /// Roll out the feedback policy of a solved value field.
    Simulate(SimulateArgs),
    /// Run the property checks.
    Verify(VerifyArgs),
    /// Print informational diagnostics (loop conditions, Isaacs gap, bounds).
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; defaults to `<config stem>.validation.txt` beside the config.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Solver settings shared by `solve` and `verify`; flags override the config.
#[derive(Debug, Args, Default, Clone)]
pub struct SolverFlags {
    /// Points per dimension, e.g. `101` or `41,41`.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// `zero`, `upper`, or a value CSV to start from.
    #[arg(long)]
    pub init: Option<String>,
    /// `plus` (min over u1 of max over u2) or `minus`.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub config: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Output directory for value.csv, history.csv and manifest.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub value_csv: PathBuf,
    /// Initial state, comma separated; defaults to the box center.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub start: Option<Vec<f64>>,
    /// Initial player-1 mode label; defaults to the first.
    #[arg(long)]
    pub d1: Option<String>,
    #[arg(long)]
    pub d2: Option<String>,
    /// Defaults to `ln(100) / lambda`.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long = "action-tol")]
    pub action_tol: Option<f64>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Output directory for trajectory.csv, cost.txt and manifest.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub config: PathBuf,
    /// all, chain, impulse, isaacs, uniqueness, probes or dpp.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Check this value CSV instead of a fresh solve.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Also write the key/value report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

/// A failed command: exit code plus a message for standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Mismatch(_) | IoError::Format(_) | IoError::Csv(_) => exit::MISMATCH,
            IoError::Io { .. } => exit::PARSE,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        CliError::new(exit::ASSUMPTION, e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::new(exit::PARSE, format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::new(exit::PARSE, format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    load_config(path).map_err(|e| CliError::new(exit::PARSE, format!("{}: {e}", path.display())))
}

/// Grid, solver settings and run parameters after applying flags and config.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub action_tol: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

pub fn default_points(dimension: usize) -> usize {
    match dimension {
        1 => 101,
        2 => 41,
        _ => 17,
    }
}

pub fn resolve_run(config: &Config, flags: &SolverFlags) -> Result<ResolvedRun, CliError> {
    let spec = &config.spec;
    let counts = flags
        .grid
        .clone()
        .or_else(|| config.grid.points.clone())
        .unwrap_or_else(|| vec![default_points(spec.dimension)]);
    let grid = GridSpec::for_problem(spec, &counts).map_err(|e| CliError::new(exit::PARSE, e.to_string()))?;
    let dt = match flags.dt.or(config.solver.dt) {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(CliError::new(exit::PARSE, format!("dt must be positive, got {dt}"))),
        None => default_dt(spec, &grid).map_err(|e| CliError::new(exit::ASSUMPTION, e.to_string()))?,
    };
    let tolerance = flags.tol.or(config.solver.tolerance).unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance > 0.0) {
        return Err(CliError::new(exit::PARSE, format!("tolerance must be positive, got {tolerance}")));
    }
    let variant_text = flags.variant.clone().or_else(|| config.solver.variant.clone());
    let variant = match variant_text {
        Some(v) => v.parse::<HamiltonianVariant>().map_err(|e| CliError::new(exit::PARSE, e))?,
        None => HamiltonianVariant::Plus,
    };
    let init = match flags.init.clone().or_else(|| config.solver.init.clone()).as_deref() {
        None | Some("zero") => Init::Zero,
        Some("upper") => Init::Upper,
        Some(path) => Init::Custom(read_value_csv(Path::new(path), spec, &grid)?),
    };
    let solver = SolverConfig {
        dt,
        tolerance,
        max_iterations: flags.max_iters.or(config.solver.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS),
        init,
        variant,
    };
    let warnings = dt_warning(spec, &grid, dt).into_iter().collect();
    Ok(ResolvedRun {
        grid,
        solver,
        action_tol: config.solver.action_tol.unwrap_or(10.0 * tolerance),
        seed: config.solver.seed.unwrap_or(0),
        warnings,
    })
}

/// Record of one invocation: inputs, resolved settings, timings and outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<String>,
    pub settings: BTreeMap<String, String>,
    pub seed: u64,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, configs: &[&Path], seed: u64) -> Self {
        Self {
            command: command.into(),
            config_paths: configs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            ..Self::default()
        }
    }

    fn record_solver(&mut self, run: &ResolvedRun) {
        let s = &mut self.settings;
        let c = &run.solver;
        s.insert("grid.points".into(), format!("{:?}", run.grid.counts()));
        s.insert("solver.dt".into(), fmt_f64(c.dt));
        s.insert("solver.tolerance".into(), fmt_f64(c.tolerance));
        s.insert("solver.max_iterations".into(), c.max_iterations.to_string());
        s.insert("solver.variant".into(), c.variant.to_string());
        s.insert(
            "solver.init".into(),
            match &c.init {
                Init::Zero => "zero".into(),
                Init::Upper => "upper".into(),
                Init::Custom(_) => "custom".into(),
            },
        );
        s.insert("solver.action_tol".into(), fmt_f64(run.action_tol));
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.text("command", &self.command);
        kv.text("config", self.config_paths.join(" "));
        kv.text("seed", self.seed);
        kv.text("version.hybrid-isaacs", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.settings {
            kv.text(k.clone(), v);
        }
        for (k, v) in &self.timings {
            kv.num(format!("timing.{k}_seconds"), *v);
        }
        kv.text("outputs", self.outputs.join(" "));
        kv
    }

    fn write(&mut self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.txt");
        self.outputs.push(path.display().to_string());
        write_file(&path, &self.to_kv().render())
    }
}

fn validation(spec: &ProblemSpec, samples: usize, seed: u64) -> ValidationReport {
    validate_a2(spec, samples, seed)
}

fn gate(spec: &ProblemSpec, seed: u64) -> Result<ValidationReport, CliError> {
    let report = validation(spec, DEFAULT_SAMPLES, seed);
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::new(exit::ASSUMPTION, format!("assumption check failed; solve refused\n{}", report.to_text())))
    }
}

/// Parsed command and captured output; `main` prints and exits.
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_from<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::PARSE } else { exit::OK };
            let text = e.render().to_string();
            return if code == exit::OK {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    if let Some(n) = cli.threads {
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut stdout = String::new();
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a, &mut stdout),
        Command::Solve(a) => cmd_solve(a, &mut stdout),
        Command::Simulate(a) => cmd_simulate(a, &mut stdout),
        Command::Verify(a) => cmd_verify(a, &mut stdout),
        Command::Analyze(a) => cmd_analyze(a, &mut stdout),
    };
    match result {
        Ok(code) => Outcome { code, stdout, stderr: String::new() },
        Err(e) => Outcome { code: e.code, stdout, stderr: format!("error: {}\n", e.message) },
    }
}

pub fn main() -> i32 {
    let out = run_from(std::env::args_os());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    out.code
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut String) -> Result<i32, CliError> {
    let config = load(&args.config)?;
    let seed = args.seed.or(config.solver.seed).unwrap_or(0);
    let report = validation(&config.spec, args.samples.unwrap_or(DEFAULT_SAMPLES), seed);
    let path = args.report.clone().unwrap_or_else(|| args.config.with_extension("validation.txt"));
    write_file(&path, &report.to_kv().render())?;
    out.push_str(&report.to_text());
    if report.passed() {
        out.push_str("result: pass\n");
        Ok(exit::OK)
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| c.status.is_failure())
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        Err(CliError::new(exit::ASSUMPTION, format!("assumption violated\n  {}", failed.join("\n  "))))
    }
}

pub fn cmd_solve(args: &SolveArgs, out: &mut String) -> Result<i32, CliError> {
    let config = load(&args.config)?;
    let spec = &config.spec;
    let run = resolve_run(&config, &args.solver)?;
    gate(spec, run.seed)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("solve", &[&args.config], run.seed);
    manifest.record_solver(&run);

    let started = Instant::now();
    let scheme = SemiLagrangian::new(spec, &run.grid, run.solver.dt)?;
    let result = solve_with(&scheme, &run.solver)?;
    manifest.timings.insert("solve".into(), started.elapsed().as_secs_f64());

    let mut meta = BTreeMap::new();
    meta.insert("dt".into(), fmt_f64(run.solver.dt));
    meta.insert("iterations".into(), result.iterations.to_string());
    meta.insert("converged".into(), result.converged.to_string());
    let value_path = args.out.join("value.csv");
    let history_path = args.out.join("history.csv");
    write_value_csv(&value_path, spec, &run.grid, &result.field, &meta)?;
    write_history_csv(&history_path, &result.history)?;
    manifest.outputs.push(value_path.display().to_string());
    manifest.outputs.push(history_path.display().to_string());
    manifest.write(&args.out)?;

    for w in &run.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(&format!(
        "iterations = {}\nconverged = {}\nlast_change = {}\nmin_V = {}\nmax_V = {}\n",
        result.iterations,
        result.converged,
        fmt_f64(result.last_change()),
        fmt_f64(result.field.min()),
        fmt_f64(result.field.max()),
    ));
    if result.converged {
        Ok(exit::OK)
    } else {
        Err(CliError::new(
            exit::NON_CONVERGENCE,
            format!(
                "no convergence after {} iterations (last change {}); partial field written to {}",
                result.iterations,
                fmt_f64(result.last_change()),
                value_path.display()
            ),
        ))
    }
}

fn mode_index(labels: &[String], wanted: Option<&str>, who: &str) -> Result<usize, CliError> {
    match wanted {
        None => Ok(0),
        Some(l) => labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| CliError::new(exit::PARSE, format!("unknown {who} mode `{l}`"))),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut String) -> Result<i32, CliError> {
    let config = load(&args.config)?;
    let spec = &config.spec;
    let flags = SolverFlags {
        grid: match &args.grid {
            Some(g) => Some(
                g.split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::new(exit::PARSE, format!("bad --grid: {e}")))?,
            ),
            None => None,
        },
        dt: args.dt,
        variant: args.variant.clone(),
        ..SolverFlags::default()
    };
    let run = resolve_run(&config, &flags)?;
    let field = read_value_csv(&args.value_csv, spec, &run.grid)?;
    let start = match &args.start {
        Some(x) if x.len() == spec.dimension => x.clone(),
        Some(x) => {
            return Err(CliError::new(
                exit::PARSE,
                format!("--start has {} components, dimension is {}", x.len(), spec.dimension),
            ))
        }
        None => spec.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
    };
    let d1 = mode_index(&spec.d1_labels, args.d1.as_deref(), "player-1")?;
    let d2 = mode_index(&spec.d2_labels, args.d2.as_deref(), "player-2")?;
    let horizon = args.horizon.unwrap_or(100f64.ln() / spec.discount);
    let params = PolicyParams {
        dt: run.solver.dt,
        action_tol: args.action_tol.unwrap_or(run.action_tol),
        variant: run.solver.variant,
    };
    let policy = Policy::new(spec, &run.grid, &field, params).map_err(sim_error)?;
    let started = Instant::now();
    let traj = simulate(&policy, &start, d1, d2, horizon).map_err(sim_error)?;
    let elapsed = started.elapsed().as_secs_f64();

    create_dir(&args.out)?;
    let traj_path = args.out.join("trajectory.csv");
    write_trajectory_csv(&traj_path, spec, &traj)?;
    let mut clamped = start.clone();
    spec.clamp(&mut clamped);
    let value = policy.value_at(&clamped, d1, d2);
    let cost = evaluate_cost(&traj, spec.discount);
    let mut kv = KeyValues::new();
    kv.num("cost.running", traj.costs.running);
    kv.num("cost.switching_p1", traj.costs.switching_p1);
    kv.num("cost.switching_p2", traj.costs.switching_p2);
    kv.num("cost.impulse", traj.costs.impulse);
    kv.num("cost.total", traj.costs.total());
    kv.num("cost.evaluated", cost);
    kv.num("value_at_start", value);
    kv.num("gap", (cost - value).abs());
    kv.num("horizon", horizon);
    kv.num("dt", params.dt);
    kv.text("steps", traj.len());
    kv.text("events.switch_p1", traj.switches_p1.len());
    kv.text("events.switch_p2", traj.switches_p2.len());
    kv.text("events.impulse", traj.impulses.len());
    let cost_path = args.out.join("cost.txt");
    write_file(&cost_path, &kv.render())?;

    let mut manifest = RunManifest::new("simulate", &[&args.config, &args.value_csv], run.seed);
    manifest.record_solver(&run);
    manifest.settings.insert("simulate.horizon".into(), fmt_f64(horizon));
    manifest.settings.insert("simulate.start".into(), start.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
    manifest.timings.insert("simulate".into(), elapsed);
    manifest.outputs.push(traj_path.display().to_string());
    manifest.outputs.push(cost_path.display().to_string());
    manifest.write(&args.out)?;
    out.push_str(&kv.render());
    Ok(exit::OK)
}

fn sim_error(e: SimError) -> CliError {
    let code = match e {
        SimError::Shape { .. } => exit::MISMATCH,
        SimError::Guard { .. } => exit::VERIFICATION,
        SimError::Expr(_) | SimError::Semigroup(_) => exit::ASSUMPTION,
    };
    CliError::new(code, e.to_string())
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut String) -> Result<i32, CliError> {
    let config = load(&args.config)?;
    let spec = &config.spec;
    let run = resolve_run(&config, &args.solver)?;
    gate(spec, run.seed)?;
    let suite: Suite = args.suite.parse().map_err(|e: String| CliError::new(exit::PARSE, e))?;
    let field = match &args.field {
        Some(p) => Some(read_value_csv(p, spec, &run.grid)?),
        None => None,
    };
    let options = VerifyOptions {
        suite,
        seed: args.seed.unwrap_or(run.seed),
        costate_samples: DEFAULT_COSTATE_SAMPLES,
        field,
        ..VerifyOptions::default()
    };
    let report = run_checks(spec, &run.grid, &run.solver, &options)?;
    if let Some(path) = &args.report {
        write_file(path, &report.to_kv().render())?;
    }
    out.push_str(&report.to_text());
    if report.passed() {
        Ok(exit::OK)
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| c.status.is_failure()).map(|c| c.name).collect();
        Err(CliError::new(exit::VERIFICATION, format!("failed checks: {}", failed.join(", "))))
    }
}

/// Informational diagnostics as a key/value document.
pub fn analysis(config: &Config, run: &ResolvedRun, samples: usize, seed: u64) -> Result<KeyValues, CliError> {
    let spec = &config.spec;
    let yong = check_y1_y2(spec);
    let report = validation(spec, samples, seed);
    let gap = isaacs_gap(spec, &run.grid, DEFAULT_COSTATE_SAMPLES, seed)
        .map_err(|e| CliError::new(exit::ASSUMPTION, e.to_string()))?;
    let lip = lipschitz_probe(spec, samples, seed).map_err(|e| CliError::new(exit::ASSUMPTION, e.to_string()))?;
    let mut kv = KeyValues::new();
    kv.text("y1.cheaper_switching", yong.y1);
    kv.text("y2.nonzero_loop_cost", yong.y2);
    kv.text("y2.loops_examined", yong.loops_examined);
    if let Some(lp) = &yong.zero_loop {
        let names: Vec<String> = lp
            .iter()
            .chain(lp.first())
            .map(|&(a, b)| format!("({},{})", spec.d1_labels[a], spec.d2_labels[b]))
            .collect();
        kv.text("y2.zero_cost_loop", names.join(" -> "));
    }
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "none".into());
    kv.text("y1.c2_min", opt(yong.c2_min));
    kv.text("y1.impulse_cost_min", opt(yong.impulse_cost_min));
    kv.num("isaacs.gap", gap);
    kv.text("isaacs.holds", gap <= crate::verify::ISAACS_ZERO_TOL);
    kv.num("lipschitz.f", lip);
    kv.num("lipschitz.k", report.lipschitz_k);
    kv.num("bounds.k_sup", report.k_sup);
    kv.num("bounds.f_sup", report.f_sup);
    kv.num("bounds.value_upper", report.k_sup / spec.discount);
    kv.text("bounds.strictness_gap", opt(spec.strictness_gap()));
    kv.num("solver.dt", run.solver.dt);
    kv.num("solver.contraction_factor", (-spec.discount * run.solver.dt).exp());
    kv.text("validation.passed", report.passed());
    for (i, w) in report.warnings.iter().chain(&run.warnings).enumerate() {
        kv.text(format!("warning.{i}"), w);
    }
    Ok(kv)
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut String) -> Result<i32, CliError> {
    let config = load(&args.config)?;
    let run = resolve_run(&config, &args.solver)?;
    let seed = args.seed.unwrap_or(run.seed);
    let kv = analysis(&config, &run, args.samples.unwrap_or(DEFAULT_SAMPLES), seed)?;
    out.push_str(&kv.render());
    Ok(exit::OK)
}
