use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use satflux::config::{fmt_float, DEFAULT_PAD};
use satflux::{
    death_schedule, emit, emit_report, load_run, oracle_fields, parse_config_with, run_checks, run_ladder, scenarios,
    solve, write_atomic, MeasureState, Overrides, ProblemConfig,
};

#[derive(Parser)]
#[command(name = "satflux", version, about = "Entropy solutions with Dirac initial data and a bounded flux")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write the run directory.
    Solve(SolveArgs),
    /// Re-run the checks on a run directory.
    Verify(VerifyArgs),
    /// Compare against the viscous approximation.
    Oracle(OracleArgs),
    /// Grid-refinement ladder.
    Sweep(SweepArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args)]
struct Source {
    /// Problem configuration (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct Tuning {
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    /// Ghost value for singular boundaries.
    #[arg(long, value_name = "M")]
    ghost: Option<f64>,
    /// Comma-separated check names.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Seed for the random test functions.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides { dx: self.dx, cfl: self.cfl, ghost: self.ghost, checks: self.checks.clone(), seed: self.seed }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run directory written by `solve`.
    run: PathBuf,
    /// Where to write report.txt and summary.json (defaults to the run directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    checks: Option<Vec<String>>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    /// Viscosities.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
    eps: Vec<f64>,
    /// Boundary value beside positive atoms.
    #[arg(long, default_value_t = 1.0)]
    m1: f64,
    /// Boundary magnitude beside negative atoms.
    #[arg(long, default_value_t = 1.0)]
    m2: f64,
    /// Comparison time.
    #[arg(long, default_value_t = 0.5)]
    time: f64,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    /// Cell sizes, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = [4e-3, 2e-3, 1e-3])]
    dxs: Vec<f64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn load(source: &Source, overrides: &Overrides) -> Result<ProblemConfig> {
    let cfg = match (&source.config, &source.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config_with(&text, overrides).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(name)) => scenarios::load(name, overrides)?,
        (None, None) => bail!("pass --config PATH or --scenario NAME"),
    };
    Ok(cfg)
}

fn run_solve(args: &SolveArgs) -> Result<bool> {
    let cfg = load(&args.source, &args.tuning.overrides())?;
    let traj = solve(&cfg.solve_problem()?)?;
    let report = run_checks(&traj, &cfg.checks)?;
    emit(&cfg, &traj, &report, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{}: {} steps, {} snapshots, {} epochs, dt = {}",
        cfg.name,
        traj.probes.len() - 1,
        traj.snapshots.len(),
        traj.epochs.len(),
        fmt_float(traj.dt)
    );
    for (j, t) in death_schedule(&traj) {
        println!("atom {j} dies at t = {}", fmt_float(t));
    }
    print!("{}", report.render());
    Ok(true)
}

fn run_verify(args: &VerifyArgs) -> Result<bool> {
    let (mut cfg, traj) = load_run(&args.run)?;
    if let Some(checks) = &args.checks {
        let over = Overrides { checks: Some(checks.clone()), seed: args.seed, ..Default::default() };
        cfg = parse_config_with(&cfg.to_toml(), &over)?;
    } else if let Some(seed) = args.seed {
        cfg.checks.seed = seed;
    }
    let report = run_checks(&traj, &cfg.checks)?;
    let out = args.out.as_deref().unwrap_or(&args.run);
    emit_report(&cfg, &traj, &report, out).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", report.render());
    Ok(report.all_pass())
}

fn oracle_state(cfg: &ProblemConfig, t: f64) -> Result<MeasureState> {
    let data = cfg.initial_data();
    let (s_lo, s_hi) = data.support().unwrap_or((0.0, 0.0));
    let reach = cfg.model.lipschitz * t + DEFAULT_PAD;
    let lo = cfg.domain.0.max(s_lo - reach);
    let hi = cfg.domain.1.min(s_hi + reach);
    Ok(MeasureState::from_initial(&data, lo, hi, cfg.solver.dx)?)
}

fn run_oracle(args: &OracleArgs) -> Result<bool> {
    let cfg = load(&args.source, &args.tuning.overrides())?;
    if args.time.is_nan() || args.time <= 0.0 {
        bail!("--time must be positive");
    }
    let state = oracle_state(&cfg, args.time)?;
    let mut table = String::from("eps,m1,m2,t,distance\n");
    let mut fields_csv = String::from("eps,x_center,u_hyperbolic,u_viscous\n");
    let mut previous = f64::INFINITY;
    let mut monotone = true;
    for &eps in &args.eps {
        let fields = oracle_fields(&cfg.model, &state, (args.m1, args.m2), eps, args.time, &cfg.solver)?;
        let mut distance = 0.0;
        for f in &fields {
            distance += f.hyperbolic.l1_distance(&f.viscous.values);
            for ((x, h), v) in f.hyperbolic.centers().iter().zip(&f.hyperbolic.values).zip(&f.viscous.values) {
                let _ =
                    writeln!(fields_csv, "{},{},{},{}", fmt_float(eps), fmt_float(*x), fmt_float(*h), fmt_float(*v));
            }
        }
        monotone &= distance < previous;
        previous = distance;
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            fmt_float(eps),
            fmt_float(args.m1),
            fmt_float(args.m2),
            fmt_float(args.time),
            fmt_float(distance)
        );
        println!("eps = {:<8} L1 distance = {}", fmt_float(eps), fmt_float(distance));
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_atomic(&out.join("oracle.csv"), table.as_bytes())?;
        write_atomic(&out.join("oracle_fields.csv"), fields_csv.as_bytes())?;
    }
    println!("monotone: {}", if monotone { "yes" } else { "no" });
    Ok(monotone)
}

fn run_sweep(args: &SweepArgs) -> Result<bool> {
    let cfg = load(&args.source, &args.tuning.overrides())?;
    let ladder = run_ladder(&cfg, &args.dxs)?;
    let table = ladder.render();
    print!("{table}");
    let mut extrapolated = String::from("j,death_time,order\n");
    for j in 0..cfg.atoms.len() {
        if let Some(e) = ladder.death_time(j) {
            let order = e.order.map(fmt_float).unwrap_or_else(|| "-".into());
            println!("atom {j}: extrapolated death time {} (order {order})", fmt_float(e.value));
            let _ = writeln!(extrapolated, "{j},{},{order}", fmt_float(e.value));
        }
    }
    println!("weak residuals decreasing: {}", if ladder.weak_monotone() { "yes" } else { "no" });
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_atomic(&out.join("ladder.csv"), table.as_bytes())?;
        write_atomic(&out.join("death_times.csv"), extrapolated.as_bytes())?;
    }
    Ok(true)
}

fn list_scenarios() -> Result<bool> {
    for name in scenarios::names() {
        println!("{name}");
    }
    Ok(true)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Verify(a) => run_verify(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Scenarios => list_scenarios(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
