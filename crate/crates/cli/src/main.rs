//! `turnpike`: command-line driver for the long-horizon LQ toolkit.
//!
//! Exit codes: 0 success, 1 a requested check failed, 2 bad input,
//! 3 internal error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use turnpike_core::csv::{num, Table};
use turnpike_core::lq::{self, LqProblem};
use turnpike_core::operators::check_hypotheses;
use turnpike_core::riccati::{self, DreSolution, ARE_TOL};
use turnpike_core::scenarios::{load_config, ExperimentConfig, Scenario, TerminalCost};
use turnpike_core::stationary;
use turnpike_core::turnpike::{self as tp, TurnpikeConfig};
use turnpike_core::verify::{self, CriterionOutcome, Fault, Suite};
use turnpike_core::Error;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "TURNPIKE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "turnpike_out";
/// Relative KKT residual accepted by `stationary`.
const STATIONARY_TOL: f64 = 1e-10;
/// Largest number of time samples written for a DRE solution.
const DRE_SAMPLES: usize = 200;

#[derive(Parser)]
#[command(
    name = "turnpike",
    version,
    about = "Long-horizon linear-quadratic optimal control experiments"
)]
struct Cli {
    /// Worker threads for horizon and k sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal steady state (x̄, ū, ȳ) and its KKT residuals.
    Stationary(Common),
    /// Finite-horizon optimal trajectories, one per horizon.
    Solve(Common),
    /// ARE solution and DRE samples on the largest horizon.
    Riccati(Common),
    /// Turnpike estimates over the horizon list.
    Turnpike(Common),
    /// Convergence of the Yosida-smoothed problems as k grows.
    Yosida(Common),
    /// Runs the numbered self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario with default settings, instead of a config file.
    #[arg(long)]
    scenario: Option<String>,
    /// Replaces the horizon list by this single horizon.
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `output_dir`, then $TURNPIKE_OUT_DIR, then ./turnpike_out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "quick", value_parser = ["quick", "full"])]
    suite: String,
    /// Comma-separated criterion ids to run (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u32>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Option<ExperimentConfig>,
    version: &'static str,
    timings: Vec<(String, f64)>,
    outputs: Vec<String>,
}

/// Collects outputs in memory and writes them in order at the end, so file
/// contents never depend on scheduling.
struct Writer {
    dir: PathBuf,
    files: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            files: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((stage.into(), start.elapsed().as_secs_f64()));
        out
    }

    fn finish(self, command: &str, config: Option<ExperimentConfig>) -> CmdResult<()> {
        let io = |path: &Path, e: std::io::Error| Failure::Internal(format!("cannot write {}: {e}", path.display()));
        fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let mut outputs = Vec::new();
        for (name, content) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, content).map_err(|e| io(&path, e))?;
            outputs.push(name.clone());
        }
        let manifest = RunManifest {
            command: command.into(),
            config,
            version: env!("CARGO_PKG_VERSION"),
            timings: self.timings,
            outputs,
        };
        let path = self.dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Internal(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| io(&path, e))
    }
}

fn out_dir(flag: Option<&PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.cloned()
        .or_else(|| config.and_then(|c| c.output_dir.as_ref()).map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn resolve_config(args: &Common) -> CmdResult<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => load_config(path).map_err(|e| match e {
            Error::Io(io) => Failure::Input(format!("cannot read config {}: {io}", path.display())),
            other => other.into(),
        })?,
        (None, Some(name)) => ExperimentConfig::for_scenario(name)?,
        (None, None) => ExperimentConfig::for_scenario("scalar")?,
    };
    if let Some(t) = args.horizon {
        cfg.horizons = vec![t];
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn terminal_matrix(cfg: &ExperimentConfig, sc: &Scenario) -> CmdResult<nalgebra::DMatrix<f64>> {
    Ok(match cfg.terminal_cost {
        TerminalCost::Zero => nalgebra::DMatrix::zeros(sc.sys.n(), sc.sys.n()),
        TerminalCost::Are => riccati::solve_are(&sc.sys)?.p,
    })
}

fn horizon_label(t: f64) -> String {
    format!("T{t}")
}

fn cmd_stationary(args: &Common) -> CmdResult<bool> {
    let cfg = resolve_config(args)?;
    let mut w = Writer::new(out_dir(args.out.as_ref(), Some(&cfg)));
    let sc = w.time("build", || cfg.build())?;
    let stat = w.time("solve", || stationary::solve_stationary(&sc.sys, &sc.target))?;
    let mut t = Table::new(&["kind", "index", "value"]);
    for (kind, v) in [("x_bar", &stat.x_bar), ("u_bar", &stat.u_bar), ("y_bar", &stat.y_bar)] {
        for (i, value) in v.iter().enumerate() {
            t.row(&[kind.into(), i.to_string(), num(*value)]);
        }
    }
    w.add("stationary.csv", t.finish());
    let rel = stat.relative_residual(&sc.sys, &sc.target);
    let mut r = Table::new(&[
        "residual_constraint",
        "residual_adjoint",
        "residual_control",
        "relative",
    ]);
    r.row(&[
        num(stat.residual_constraint),
        num(stat.residual_adjoint),
        num(stat.residual_control),
        num(rel),
    ]);
    w.add("stationary_residuals.csv", r.finish());
    let ok = rel <= STATIONARY_TOL;
    println!(
        "stationary {}: x_bar = {:?}, relative residual {rel:.3e}",
        sc.name,
        stat.x_bar.as_slice()
    );
    if !ok {
        eprintln!("relative KKT residual {rel:e} exceeds {STATIONARY_TOL:e}");
    }
    w.finish("stationary", Some(cfg))?;
    Ok(ok)
}

fn cmd_solve(args: &Common) -> CmdResult<bool> {
    let cfg = resolve_config(args)?;
    let mut w = Writer::new(out_dir(args.out.as_ref(), Some(&cfg)));
    let sc = w.time("build", || cfg.build())?;
    let p0 = terminal_matrix(&cfg, &sc)?;
    let solved = w.time("solve", || {
        cfg.horizons
            .par_iter()
            .map(|&t| {
                let prob = LqProblem::new(sc.sys.clone(), t, sc.target.clone(), sc.x0.clone(), p0.clone(), cfg.dt)?;
                let traj = lq::solve(&prob, cfg.solver)?;
                let cost = lq::cost(&prob, &traj)?;
                Ok((t, traj, cost))
            })
            .collect::<turnpike_core::Result<Vec<_>>>()
    })?;
    let mut summary = Table::new(&["T", "dt", "method", "cost", "control_residual"]);
    for (t, traj, cost) in &solved {
        w.add(format!("trajectory_{}.csv", horizon_label(*t)), traj.to_csv());
        summary.row(&[
            num(*t),
            num(cfg.dt),
            format!("{:?}", traj.method),
            num(*cost),
            num(traj.control_residual(&sc.sys)),
        ]);
        println!("T = {t}: {:?}, cost {cost:.10e}", traj.method);
    }
    w.add("solve_summary.csv", summary.finish());
    w.finish("solve", Some(cfg))?;
    Ok(true)
}

fn thinned(dre: &DreSolution) -> DreSolution {
    let stride = (dre.grid.len() - 1).div_ceil(DRE_SAMPLES).max(1);
    let keep = |i: &usize| i.is_multiple_of(stride) || *i == dre.grid.len() - 1;
    DreSolution {
        grid: (0..dre.grid.len()).filter(keep).map(|i| dre.grid[i]).collect(),
        p_samples: (0..dre.grid.len())
            .filter(keep)
            .map(|i| dre.p_samples[i].clone())
            .collect(),
        p0: dre.p0.clone(),
    }
}

fn cmd_riccati(args: &Common) -> CmdResult<bool> {
    let cfg = resolve_config(args)?;
    let mut w = Writer::new(out_dir(args.out.as_ref(), Some(&cfg)));
    let sc = w.time("build", || cfg.build())?;
    let are = w.time("are", || riccati::solve_are(&sc.sys))?;
    let mut p = Table::new(&["i", "j", "value"]);
    for i in 0..are.p.nrows() {
        for j in 0..are.p.ncols() {
            p.row(&[i.to_string(), j.to_string(), num(are.p[(i, j)])]);
        }
    }
    w.add("are.csv", p.finish());
    let mut s = Table::new(&["residual", "closed_loop_abscissa", "lambda"]);
    s.row(&[num(are.residual), num(are.closed_loop_abscissa), num(are.lambda())]);
    w.add("are_summary.csv", s.finish());

    let horizon = cfg.horizons.iter().copied().fold(0.0, f64::max);
    let steps = (horizon / cfg.dt).round() as usize;
    let p0 = terminal_matrix(&cfg, &sc)?;
    let dre = w.time("dre", || riccati::solve_dre(&sc.sys, horizon, &p0, steps))?;
    w.add("dre.csv", thinned(&dre).to_csv());
    println!(
        "ARE residual {:.3e}, closed-loop decay rate {:.10}; DRE on [0, {horizon}] written",
        are.residual,
        are.lambda()
    );
    let ok = are.residual <= ARE_TOL;
    w.finish("riccati", Some(cfg))?;
    Ok(ok)
}

fn cmd_turnpike(args: &Common) -> CmdResult<bool> {
    let cfg = resolve_config(args)?;
    let mut w = Writer::new(out_dir(args.out.as_ref(), Some(&cfg)));
    let sc = w.time("build", || cfg.build())?;
    let report = check_hypotheses(&sc.sys, cfg.t0, cfg.rank_tol)?;
    if !report.satisfied() {
        return Err(Error::HypothesisViolation(report.failures().join("; ")).into());
    }
    let stat = stationary::solve_stationary(&sc.sys, &sc.target)?;
    let are = riccati::solve_are(&sc.sys)?;
    let tcfg = TurnpikeConfig {
        target: sc.target.clone(),
        x0: sc.x0.clone(),
        dt: cfg.dt,
        solver: cfg.solver,
    };
    let reports = w.time("turnpike", || {
        tp::verify_turnpike(&sc.sys, &stat, &are, &cfg.horizons, &tcfg)
    })?;
    w.add("turnpike_reports.csv", tp::reports_csv(&reports));
    w.add("turnpike_summary.csv", tp::summary_csv(&reports));
    for r in &reports {
        println!(
            "T = {}: fitted c {:.4}, fitted lambda {}, reference {:.4}, bound {}",
            r.horizon,
            r.fitted_c,
            r.fitted_lambda.map_or("NaN".into(), |l| format!("{l:.4}")),
            r.lambda_reference,
            if r.bound_satisfied { "holds" } else { "violated" }
        );
    }
    let ok = reports.iter().all(|r| r.bound_satisfied);
    w.finish("turnpike", Some(cfg))?;
    Ok(ok)
}

fn cmd_yosida(args: &Common) -> CmdResult<bool> {
    let cfg = resolve_config(args)?;
    let mut w = Writer::new(out_dir(args.out.as_ref(), Some(&cfg)));
    let sc = w.time("build", || cfg.build())?;
    let rows = w.time("stationary", || {
        stationary::stationary_convergence_study(&sc.sys, &sc.target, &cfg.yosida_ks)
    })?;
    w.add("yosida_stationary.csv", stationary::study_csv(&rows));
    let p0 = terminal_matrix(&cfg, &sc)?;
    let horizon = cfg.horizons[0];
    let prob = LqProblem::new(sc.sys.clone(), horizon, sc.target.clone(), sc.x0.clone(), p0, cfg.dt)?;
    let dynamic = w.time("dynamic", || {
        tp::yosida_dynamic_study(&prob, &cfg.yosida_ks, cfg.solver)
    })?;
    w.add("yosida_dynamic.csv", tp::yosida_csv(&dynamic));
    for r in &dynamic {
        println!(
            "k = {}: err_u {:.3e}, err_x {:.3e}, err_y {:.3e}",
            r.k, r.err_u, r.err_x, r.err_y
        );
    }
    w.finish("yosida", Some(cfg))?;
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult<bool> {
    let suite: Suite = args.suite.parse()?;
    let fault = args.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let ids: BTreeSet<u32> = match &args.only {
        Some(list) => list.iter().copied().collect(),
        None => (1..=12).collect(),
    };
    if let Some(bad) = ids.iter().find(|id| !(1..=12).contains(*id)) {
        return Err(Failure::Input(format!("criterion id {bad} is not in 1..=12")));
    }
    let mut w = Writer::new(out_dir(args.out.as_ref(), None));
    let start = Instant::now();
    let mut outcomes: Vec<CriterionOutcome> = Vec::new();
    for &id in ids.iter().filter(|id| **id <= 11) {
        let o = verify::run_criterion(id, suite, fault)?;
        println!("{}", o.line());
        outcomes.push(o);
    }
    if ids.contains(&12) {
        let all = outcomes.len() == 11;
        let reference = (all && suite == Suite::Quick && fault.is_none()).then_some(outcomes.as_slice());
        let full_seconds = (all && suite == Suite::Full).then(|| start.elapsed().as_secs_f64());
        let o = verify::determinism_check(reference, full_seconds);
        println!("{}", o.line());
        outcomes.push(o);
    }
    for o in &outcomes {
        w.timings.push((format!("criterion {}", o.id), o.seconds));
        for a in &o.artifacts {
            w.add(format!("c{:02}_{}", o.id, a.file), a.content.clone());
        }
    }
    w.add("verify_summary.csv", verify::outcomes_csv(&outcomes));
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{} ({})", o.id, o.name))
        .collect();
    if failed.is_empty() {
        println!("all {} criteria passed", outcomes.len());
    } else {
        println!("failed criteria: {}", failed.join(", "));
    }
    w.finish("verify", None)?;
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Stationary(a) => cmd_stationary(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Riccati(a) => cmd_riccati(a),
        Command::Turnpike(a) => cmd_turnpike(a),
        Command::Yosida(a) => cmd_yosida(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
