//! `darkpool solve|simulate|sweep|check` front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 config or IO error, 3 numeric
//! failure in the solver or simulator.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::checks::{render_table, run_battery};
use crate::config::{parse_perturbation, ConfigError, RunConfig, SweepParam};
use crate::linalg::Vector;
use crate::market::{DerivedQuantities, MarketParams};
use crate::sim::{compare_strategies, draw_jumps, Engine, SimError};
use crate::solver::{
    bounds_finite, bounds_limit, principal_solution, solve_finite_penalty, Penalty, SolverError, ValuePath,
};
use crate::solver::fmt_num;
use crate::strategy::action_from_matrix;

#[derive(Debug, Parser)]
#[command(name = "darkpool", version, about = "Optimal liquidation with a lit exchange and a dark pool")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the value matrix and write value_path.csv and bounds.csv.
    Solve(RunArgs),
    /// Simulate the optimal strategy; writes trajectory_<k>.csv and mc_summary.json.
    Simulate(RunArgs),
    /// Sweep one market parameter; writes sweep_<param>.csv.
    Sweep(RunArgs),
    /// Run the numerical check battery; writes check_report.txt and check_report.jsonl.
    Check(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides DARKPOOL_OUT_DIR and output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replaces simulate.base_seed and check.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed { .. } => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn solver_err(context: &str, e: SolverError) -> CliError {
    match e {
        SolverError::Invalid(v) => CliError::Config(ConfigError::Invalid(format!("{context}: {v}"))),
        e => CliError::Numeric(format!("{context}: {e}")),
    }
}

fn sim_err(context: &str, e: SimError) -> CliError {
    match e {
        SimError::Solver(s) => solver_err(context, s),
        e => CliError::Numeric(format!("{context}: {e}")),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.simulate.base_seed = s;
        cfg.check.seed = s;
    }
    let dir = cfg.output_dir(args.out.as_deref());
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    Ok((cfg, dir))
}

fn market(cfg: &RunConfig) -> Result<(MarketParams, DerivedQuantities), CliError> {
    let p = cfg.market()?.params()?;
    let d = p.derive().map_err(|e| ConfigError::Invalid(format!("market: {e}")))?;
    Ok((p, d))
}

fn solve_path(cfg: &RunConfig, p: &MarketParams, d: &DerivedQuantities) -> Result<ValuePath, SolverError> {
    let grid = cfg.solver.grid(p.horizon);
    match cfg.solver.penalty() {
        Penalty::Infinite => principal_solution(p, d, &grid, &cfg.solver.ladder()),
        Penalty::Finite(l) => solve_finite_penalty(p, d, l, &grid),
    }
}

fn bounds_csv(path: &ValuePath, p: &MarketParams, d: &DerivedQuantities) -> Result<String, SolverError> {
    let mut s = String::from("t,p,q\n");
    for &t in path.grid() {
        let b = match path.penalty {
            Penalty::Infinite => bounds_limit(p, d, t)?,
            Penalty::Finite(l) => bounds_finite(p, d, l, t)?,
        };
        let _ = writeln!(s, "{},{},{}", fmt_num(t), fmt_num(b.p), fmt_num(b.q));
    }
    Ok(s)
}

fn ladder_csv(path: &ValuePath) -> String {
    let mut s = String::from("rung,l,max_change,probe_value\n");
    for (k, r) in path.ladder.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{},{}", fmt_num(r.l), fmt_num(r.max_change), fmt_num(r.probe_value));
    }
    s
}

pub fn cmd_solve(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, dir) = prepare(args)?;
    let (p, d) = market(&cfg)?;
    let x = Vector::from_vec(cfg.market()?.portfolio()?);
    let path = solve_path(&cfg, &p, &d).map_err(|e| solver_err("solve", e))?;
    write_file(&dir, "value_path.csv", &path.to_csv())?;
    write_file(&dir, "bounds.csv", &bounds_csv(&path, &p, &d).map_err(|e| solver_err("bounds", e))?)?;
    let mut msg = String::new();
    if !path.ladder.is_empty() {
        write_file(&dir, "ladder.csv", &ladder_csv(&path))?;
        for (k, r) in path.ladder.iter().enumerate() {
            let _ = writeln!(msg, "rung {k:2}  l = {:.6e}  change = {:.3e}  probe v = {:.12}", r.l, r.max_change, r.probe_value);
        }
    }
    let v = path.value(0.0, &x).map_err(|e| solver_err("value", e))?;
    let _ = writeln!(msg, "v(0, x) = {}", fmt_num(v));
    let _ = writeln!(msg, "wrote {}", dir.display());
    let _ = out.write_all(msg.as_bytes());
    Ok(())
}

pub fn cmd_simulate(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, dir) = prepare(args)?;
    let (p, d) = market(&cfg)?;
    let sim = &cfg.simulate;
    let x0 = match &sim.x0 {
        Some(x) => x.clone(),
        None => cfg.market()?.portfolio()?,
    };
    let perturbation = parse_perturbation(&sim.perturbation)?;
    if sim.n_paths < 2 {
        return Err(ConfigError::Invalid("simulate.n_paths must be at least 2".into()).into());
    }
    let path = solve_path(&cfg, &p, &d).map_err(|e| solver_err("solve", e))?;
    let engine = Engine::new(&path, &p, perturbation, sim.ode_step_divisor).map_err(|e| sim_err("simulate", e))?;
    for k in 0..sim.trajectories.min(sim.n_paths) {
        let seed = sim.base_seed.wrapping_add(k as u64);
        let schedule = draw_jumps(&p.theta, sim.t0, p.horizon, seed);
        let traj = engine.trajectory(&x0, sim.t0, &schedule, Some(seed)).map_err(|e| sim_err("simulate", e))?;
        write_file(&dir, &format!("trajectory_{k}.csv"), &traj.to_csv())?;
    }
    let est = engine.estimate(&x0, sim.t0, sim.n_paths, sim.base_seed).map_err(|e| sim_err("simulate", e))?;
    write_file(&dir, "mc_summary.json", &format!("{}\n", est.to_json()))?;
    let mut msg = format!(
        "{}: mean {} +- {} (with remainder {} +- {}), analytic {}\n",
        est.tag,
        fmt_num(est.mean),
        fmt_num(est.std_error),
        fmt_num(est.total_mean),
        fmt_num(est.total_std_error),
        fmt_num(est.analytic_value)
    );
    if perturbation.is_some() {
        let optimal = Engine::new(&path, &p, None, sim.ode_step_divisor).map_err(|e| sim_err("simulate", e))?;
        let cmp = compare_strategies(&optimal, &engine, &x0, sim.t0, sim.n_paths, sim.base_seed)
            .map_err(|e| sim_err("simulate", e))?;
        let json = serde_json::to_string(&cmp).expect("comparison serialises");
        write_file(&dir, "mc_comparison.json", &format!("{json}\n"))?;
        let _ = writeln!(
            msg,
            "excess cost over optimal: {} +- {}",
            fmt_num(cmp.mean_difference),
            fmt_num(cmp.difference_std_error)
        );
    }
    let _ = writeln!(msg, "wrote {}", dir.display());
    let _ = out.write_all(msg.as_bytes());
    Ok(())
}

pub fn cmd_sweep(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, dir) = prepare(args)?;
    let base = cfg.market()?.params()?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| ConfigError::Invalid("missing sweep section".into()))?;
    let param = SweepParam::parse(&sweep.parameter, base.n())?;
    let grid = sweep.grid()?;
    let portfolios = match &sweep.portfolios {
        Some(v) if !v.is_empty() => v.clone(),
        _ => vec![cfg.market()?.portfolio()?],
    };
    let n = base.n();
    let rows: Vec<Result<Vec<(f64, Vector, Vector)>, CliError>> = grid
        .par_iter()
        .map(|&v| {
            let context = format!("{} = {v}", sweep.parameter);
            let p = param.apply(&base, v);
            let d = p.derive().map_err(|e| ConfigError::Invalid(format!("{context}: {e}")))?;
            let path = solve_path(&cfg, &p, &d).map_err(|e| solver_err(&context, e))?;
            let c = path.evaluate(sweep.t).map_err(|e| solver_err(&context, e))?;
            Ok(portfolios
                .iter()
                .map(|x| {
                    let x = Vector::from_column_slice(x);
                    let a = action_from_matrix(&p, &c, sweep.t, &x);
                    (x.dot(&(&c * &x)), a.xi, a.eta)
                })
                .collect())
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut msg = String::new();
    for k in 0..portfolios.len() {
        let mut s = sweep.parameter.clone();
        s.push_str(",v");
        for i in 1..=n {
            let _ = write!(s, ",xi_{i}");
        }
        for i in 1..=n {
            let _ = write!(s, ",eta_{i}");
        }
        s.push('\n');
        for (v, row) in grid.iter().zip(&rows) {
            let (val, xi, eta) = &row[k];
            let _ = write!(s, "{},{}", fmt_num(*v), fmt_num(*val));
            for e in xi.iter().chain(eta.iter()) {
                let _ = write!(s, ",{}", fmt_num(*e));
            }
            s.push('\n');
        }
        let name = if portfolios.len() == 1 {
            format!("sweep_{}.csv", sweep.parameter)
        } else {
            format!("sweep_{}_x{}.csv", sweep.parameter, k + 1)
        };
        let path = write_file(&dir, &name, &s)?;
        let _ = writeln!(msg, "x = {:?}: {} points -> {}", portfolios[k], grid.len(), path.display());
    }
    let _ = out.write_all(msg.as_bytes());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "market".into(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_check(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, dir) = prepare(args)?;
    let mut markets = Vec::new();
    if let Some(m) = &cfg.market {
        markets.push((stem(&args.config), m.params()?));
    }
    for file in cfg.market_files() {
        let other = RunConfig::load(&file)?;
        markets.push((stem(&file), other.market()?.params()?));
    }
    let reports = run_battery(&cfg.battery(), &markets);
    let table = render_table(&reports);
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&r.to_json());
        lines.push('\n');
    }
    write_file(&dir, "check_report.txt", &table)?;
    write_file(&dir, "check_report.jsonl", &lines)?;
    let _ = out.write_all(table.as_bytes());
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed, total: reports.len() });
    }
    Ok(())
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let args = match command {
        Command::Solve(a) | Command::Simulate(a) | Command::Sweep(a) | Command::Check(a) => a,
    };
    let run = || {
        let mut buf = Vec::new();
        let r = match command {
            Command::Solve(a) => cmd_solve(a, &mut buf),
            Command::Simulate(a) => cmd_simulate(a, &mut buf),
            Command::Sweep(a) => cmd_sweep(a, &mut buf),
            Command::Check(a) => cmd_check(a, &mut buf),
        };
        (buf, r)
    };
    let (buf, r) = match args.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| ConfigError::Invalid(format!("threads: {e}")))?;
            pool.install(run)
        }
        None => run(),
    };
    let _ = out.write_all(&buf);
    r
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
