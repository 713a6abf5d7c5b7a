//! Numbered self-checks of the whole pipeline. Every check compares a
//! computed quantity with a closed-form value or with an independent route
//! to the same quantity, and records CSV artifacts that are a deterministic
//! function of the inputs.

use std::f64::consts::SQRT_2;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::csv::{num, Table};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lq::{self, BackwardData, ForwardData, LqProblem, SolverChoice};
use crate::operators::{check_hypotheses, LtiSystem, DEFAULT_RANK_TOL, DEFAULT_T0};
use crate::riccati::{are_residual, solve_are, solve_dre, AreSolution};
use crate::scenarios::{heat_1d, random_stable, scalar_example, uniform, HeatControl};
use crate::stationary::{feasible_directions, solve_stationary, stationary_convergence_study, stationary_cost};
use crate::turnpike::{
    energy_diagnostics, h_trajectory, propagation_residual, summary_csv, verify_turnpike, yosida_csv,
    yosida_dynamic_study, TurnpikeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Quick,
    /// Adds the grid-refinement order checks.
    Full,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Self::Quick),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidArgument(format!(
                "unknown suite '{other}', expected quick or full"
            ))),
        }
    }
}

/// Deliberate corruption used to exercise the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds `1e-3` to every entry of the ARE solution.
    CorruptAre,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrupt-are" => Ok(Self::CorruptAre),
            other => Err(Error::InvalidArgument(format!(
                "unknown fault '{other}', expected corrupt-are"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// Wall-clock budget in seconds; exceeding it fails the criterion.
    pub limit: f64,
    pub artifacts: Vec<Artifact>,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<24} {}  [{:.3} s, limit {} s]  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.limit,
            self.detail
        )
    }
}

/// `(id, name, runtime limit in seconds)` of every criterion.
pub const CRITERIA: [(u32, &str, f64); 12] = [
    (1, "scalar_are", 0.1),
    (2, "scalar_stationary", 0.1),
    (3, "state_adjoint_relation", 10.0),
    (4, "dre_constancy", 5.0),
    (5, "propagation_identity", 30.0),
    (6, "rate_recovery", 20.0),
    (7, "turnpike_bound", 30.0),
    (8, "energy_identity", 10.0),
    (9, "duality_identity", 10.0),
    (10, "yosida_convergence", 60.0),
    (11, "optimality_sampling", 10.0),
    (12, "determinism", 300.0),
];

/// Wall-clock budget of the full suite.
pub const FULL_SUITE_LIMIT: f64 = 300.0;

struct Ctx {
    suite: Suite,
    fault: Option<Fault>,
}

impl Ctx {
    fn full(&self) -> bool {
        self.suite == Suite::Full
    }

    fn are(&self, sys: &LtiSystem) -> Result<AreSolution> {
        let are = solve_are(sys)?;
        match self.fault {
            None => Ok(are),
            Some(Fault::CorruptAre) => {
                let p = are.p.add_scalar(1e-3);
                let gen = sys.a() - sys.control_gram() * &p;
                Ok(AreSolution {
                    residual: are_residual(sys, &p),
                    closed_loop_abscissa: linalg::spectral_abscissa(&gen),
                    p,
                })
            }
        }
    }
}

#[derive(Default)]
struct Checks {
    ok: bool,
    notes: Vec<String>,
    artifacts: Vec<Artifact>,
}

impl Checks {
    fn new() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }

    fn le(&mut self, what: &str, value: f64, limit: f64) {
        let pass = value <= limit;
        self.ok &= pass;
        self.notes.push(format!(
            "{what} = {value:.3e} {} {limit:.0e}",
            if pass { "<=" } else { ">" }
        ));
    }

    fn ge(&mut self, what: &str, value: f64, limit: f64) {
        let pass = value >= limit;
        self.ok &= pass;
        let limit = if limit == 0.0 || (1e-3..1e4).contains(&limit.abs()) {
            limit.to_string()
        } else {
            format!("{limit:e}")
        };
        self.notes.push(format!(
            "{what} = {value:.3e} {} {limit}",
            if pass { ">=" } else { "<" }
        ));
    }

    fn holds(&mut self, what: &str, cond: bool) {
        self.ok &= cond;
        if !cond {
            self.notes.push(format!("{what}: violated"));
        }
    }

    fn artifact(&mut self, file: &str, content: String) {
        self.artifacts.push(Artifact {
            file: file.into(),
            content,
        });
    }
}

fn random_4x4() -> Result<LtiSystem> {
    let sys = random_stable(4, 2, 42, 0.5)?;
    let report = check_hypotheses(&sys, DEFAULT_T0, DEFAULT_RANK_TOL)?;
    if !report.satisfied() {
        return Err(Error::HypothesisViolation(report.failures().join("; ")));
    }
    Ok(sys)
}

fn heat() -> Result<(LtiSystem, DVector<f64>)> {
    heat_1d(50, HeatControl::default(), "bump")
}

fn c1(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let (sys, _, _) = scalar_example();
    let are = ctx.are(&sys)?;
    let p = are.p[(0, 0)];
    ch.le("|P - (sqrt2 - 1)|", (p - (SQRT_2 - 1.0)).abs(), 1e-10);
    ch.le("|abscissa + sqrt2|", (are.closed_loop_abscissa + SQRT_2).abs(), 1e-10);
    let mut t = Table::new(&["p", "closed_loop_abscissa", "residual"]);
    t.row(&[num(p), num(are.closed_loop_abscissa), num(are.residual)]);
    ch.artifact("scalar_are.csv", t.finish());
    Ok(())
}

fn c2(_: &Ctx, ch: &mut Checks) -> Result<()> {
    let (sys, z, _) = scalar_example();
    let s = solve_stationary(&sys, &z)?;
    let err = (s.x_bar[0] - 0.5)
        .abs()
        .max((s.u_bar[0] - 0.5).abs())
        .max((s.y_bar[0] + 0.5).abs());
    ch.le("triple error", err, 1e-12);
    ch.le("KKT residual", s.max_residual(), 1e-12);
    let mut t = Table::new(&["x_bar", "u_bar", "y_bar", "residual"]);
    t.row(&[num(s.x_bar[0]), num(s.u_bar[0]), num(s.y_bar[0]), num(s.max_residual())]);
    ch.artifact("scalar_stationary.csv", t.finish());
    Ok(())
}

/// Largest `|y - P_T x|` over the nodes of the transcription solution with
/// `z = 0`, against an RK4 solve of the DRE on the same grid.
fn relation_defect(sys: &LtiSystem, x0: &DVector<f64>, horizon: f64, dt: f64) -> Result<f64> {
    let n = sys.n();
    let prob = LqProblem::tracking(sys.clone(), horizon, DVector::zeros(n), x0.clone(), dt)?;
    let traj = lq::solve_transcription(&prob)?;
    let dre = solve_dre(sys, horizon, &DMatrix::zeros(n, n), prob.steps())?;
    Ok(traj
        .x
        .iter()
        .zip(&traj.y)
        .zip(&dre.p_samples)
        .map(|((x, y), p)| (y - p * x).norm())
        .fold(0.0, f64::max))
}

fn c3(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let cases = [
        ("scalar", scalar_example().0, DVector::from_element(1, 1.0)),
        ("random_stable", random_4x4()?, DVector::from_element(4, 1.0)),
    ];
    let mut t = Table::new(&["scenario", "dt", "defect"]);
    for (name, sys, x0) in &cases {
        let coarse = relation_defect(sys, x0, 2.0, 1e-3)?;
        t.row(&[name.to_string(), num(1e-3), num(coarse)]);
        ch.le(&format!("{name} defect"), coarse, 1e-5);
        if ctx.full() {
            let fine = relation_defect(sys, x0, 2.0, 5e-4)?;
            t.row(&[name.to_string(), num(5e-4), num(fine)]);
            ch.ge(&format!("{name} refinement ratio"), coarse / fine, 3.0);
        }
    }
    ch.artifact("state_adjoint_relation.csv", t.finish());
    Ok(())
}

fn c4(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let mut t = Table::new(&["scenario", "max_deviation"]);
    for (name, sys) in [("scalar", scalar_example().0), ("random_stable", random_4x4()?)] {
        let are = ctx.are(&sys)?;
        let dre = solve_dre(&sys, 5.0, &are.p, 5000)?;
        let dev = dre.p_samples.iter().map(|p| (p - &are.p).norm()).fold(0.0, f64::max);
        ch.le(&format!("{name} |P_T - P|"), dev, 1e-8);
        t.row(&[name.into(), num(dev)]);
    }
    ch.artifact("dre_constancy.csv", t.finish());
    Ok(())
}

fn propagation(
    ctx: &Ctx,
    sys: &LtiSystem,
    z: &DVector<f64>,
    (horizon, dt): (f64, f64),
    solver: SolverChoice,
) -> Result<f64> {
    let are = ctx.are(sys)?;
    let stat = solve_stationary(sys, z)?;
    let prob = LqProblem::tracking(sys.clone(), horizon, z.clone(), DVector::zeros(sys.n()), dt)?;
    let traj = lq::solve(&prob, solver)?;
    let h = h_trajectory(&traj, &stat, &are)?;
    propagation_residual(&h, sys, &are, &traj.grid)
}

fn c5(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let (scalar, z1, _) = scalar_example();
    let (heat_sys, heat_z) = heat()?;
    // The trapezoid transcription is only second order; at the coarse heat
    // step its error exceeds the tolerance, so the heat case uses the
    // default solver (a substepped Riccati sweep).
    let cases = [
        ("scalar", &scalar, &z1, 10.0, 1e-3, 1e-6, SolverChoice::Transcription),
        ("heat_1d", &heat_sys, &heat_z, 20.0, 1e-2, 1e-4, SolverChoice::Auto),
    ];
    let mut t = Table::new(&["scenario", "dt", "residual"]);
    for (name, sys, z, horizon, dt, tol, solver) in cases {
        let coarse = propagation(ctx, sys, z, (horizon, dt), solver)?;
        t.row(&[name.into(), num(dt), num(coarse)]);
        ch.le(&format!("{name} residual"), coarse, tol);
        if ctx.full() {
            let fine = propagation(ctx, sys, z, (horizon, dt / 2.0), solver)?;
            t.row(&[name.into(), num(dt / 2.0), num(fine)]);
            ch.ge(&format!("{name} halving ratio"), coarse / fine, 3.0);
        }
    }
    ch.artifact("propagation_identity.csv", t.finish());
    Ok(())
}

fn c6(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let mut t = Table::new(&["scenario", "T", "fitted_lambda", "reference"]);
    let (scalar, z, x0) = scalar_example();
    let cases = [
        ("scalar", scalar, z, x0, Some(SQRT_2)),
        (
            "random_stable",
            random_4x4()?,
            DVector::from_element(4, 1.0),
            DVector::zeros(4),
            None,
        ),
    ];
    for (name, sys, z, x0, exact) in cases {
        let are = ctx.are(&sys)?;
        let stat = solve_stationary(&sys, &z)?;
        let reference = exact.unwrap_or_else(|| are.lambda());
        let horizon = (10.0 / reference).ceil().max(20.0);
        let cfg = TurnpikeConfig {
            target: z,
            x0,
            dt: 1e-3,
            solver: SolverChoice::Sweep,
        };
        let report = verify_turnpike(&sys, &stat, &are, &[horizon], &cfg)?.remove(0);
        let fitted = report.fitted_lambda.unwrap_or(f64::NAN);
        let tol = if exact.is_some() { 0.02 } else { 0.05 };
        ch.le(
            &format!("{name} relative rate error"),
            (fitted / reference - 1.0).abs(),
            tol,
        );
        t.row(&[name.into(), num(horizon), num(fitted), num(reference)]);
    }
    ch.artifact("rate_recovery.csv", t.finish());
    Ok(())
}

fn c7(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let (sys, z, x0) = scalar_example();
    let are = ctx.are(&sys)?;
    let stat = solve_stationary(&sys, &z)?;
    let cfg = TurnpikeConfig {
        target: z,
        x0,
        dt: 1e-3,
        solver: SolverChoice::Sweep,
    };
    let reports = verify_turnpike(&sys, &stat, &are, &[5.0, 10.0, 20.0, 40.0], &cfg)?;
    ch.holds("node-wise bound", reports.iter().all(|r| r.bound_satisfied));
    let cs: Vec<f64> = reports.iter().map(|r| r.fitted_c).collect();
    let spread = cs.iter().copied().fold(0.0, f64::max) / cs.iter().copied().fold(f64::INFINITY, f64::min);
    ch.le("c spread", spread, 2.0);
    let mid = |t: f64| reports.iter().find(|r| r.horizon == t).map(|r| r.midpoint_gap_x());
    match (mid(10.0), mid(20.0)) {
        (Some(g10), Some(g20)) => ch.le("midpoint ratio", g20 / g10, 0.2),
        _ => ch.holds("midpoint horizons present", false),
    }
    ch.artifact("turnpike_summary.csv", summary_csv(&reports));
    Ok(())
}

fn energy_residual(sys: &LtiSystem, z: &DVector<f64>, (horizon, dt): (f64, f64), solver: SolverChoice) -> Result<f64> {
    let stat = solve_stationary(sys, z)?;
    let prob = LqProblem::tracking(sys.clone(), horizon, z.clone(), DVector::zeros(sys.n()), dt)?;
    let traj = lq::solve(&prob, solver)?;
    Ok(energy_diagnostics(&prob, &traj, &stat)?.identity_residual)
}

fn c8(_: &Ctx, ch: &mut Checks) -> Result<()> {
    let (scalar, z1, _) = scalar_example();
    let (heat_sys, heat_z) = heat()?;
    let mut t = Table::new(&["scenario", "residual"]);
    for (name, sys, z, horizon, dt, tol, solver) in [
        ("scalar", &scalar, &z1, 10.0, 1e-3, 1e-6, SolverChoice::Transcription),
        ("heat_1d", &heat_sys, &heat_z, 20.0, 1e-2, 1e-4, SolverChoice::Auto),
    ] {
        let r = energy_residual(sys, z, (horizon, dt), solver)?;
        ch.le(&format!("{name} residual"), r, tol);
        t.row(&[name.into(), num(r)]);
    }
    ch.artifact("energy_identity.csv", t.finish());
    Ok(())
}

/// `a_i sin(w_i t) + b_i cos(w_i t)` componentwise.
struct Wave {
    a: DVector<f64>,
    b: DVector<f64>,
    w: DVector<f64>,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let mut vec = |scale: f64, shift: f64| DVector::from_fn(dim, |_, _| shift + scale * uniform(rng));
        let a = vec(1.0, 0.0);
        let b = vec(1.0, 0.0);
        let w = vec(1.5, 2.5);
        Self { a, b, w }
    }

    fn at(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.a.len(), |i, _| {
            self.a[i] * (self.w[i] * t).sin() + self.b[i] * (self.w[i] * t).cos()
        })
    }

    fn samples(&self, horizon: f64, steps: usize) -> Vec<DVector<f64>> {
        (0..=steps)
            .map(|i| self.at(horizon * i as f64 / steps as f64))
            .collect()
    }
}

struct DualityCase {
    sys: LtiSystem,
    coupling: DMatrix<f64>,
    y0: DVector<f64>,
    z_t: DVector<f64>,
    f: Wave,
    u: Wave,
    g: Wave,
}

impl DualityCase {
    fn new(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| uniform(&mut rng));
        let a = mat(3, 3);
        let b = mat(3, 2);
        let coupling = mat(3, 3) * 0.5;
        let y0 = mat(3, 1).column(0).into_owned();
        let z_t = mat(3, 1).column(0).into_owned();
        Ok(Self {
            sys: LtiSystem::new(a, b, DMatrix::identity(3, 3))?,
            coupling,
            y0,
            z_t,
            f: Wave::random(&mut rng, 3),
            u: Wave::random(&mut rng, 2),
            g: Wave::random(&mut rng, 3),
        })
    }

    fn residual(&self, dt: f64) -> Result<f64> {
        let steps = (1.0 / dt).round() as usize;
        let fwd = ForwardData {
            y0: self.y0.clone(),
            f: self.f.samples(1.0, steps),
            u: self.u.samples(1.0, steps),
            coupling: self.coupling.clone(),
        };
        let bwd = BackwardData {
            z_t: self.z_t.clone(),
            g: self.g.samples(1.0, steps),
        };
        lq::duality_residual(&self.sys, &fwd, &bwd, 1.0, dt)
    }
}

fn c9(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let mut t = Table::new(&["seed", "dt", "residual"]);
    let (mut worst, mut worst_ratio) = (0.0f64, f64::INFINITY);
    for seed in 0..20u64 {
        let case = DualityCase::new(1000 + seed)?;
        let r = case.residual(1e-3)?;
        worst = worst.max(r);
        t.row(&[seed.to_string(), num(1e-3), num(r)]);
        if ctx.full() {
            let coarse = case.residual(2e-3)?;
            worst_ratio = worst_ratio.min(coarse / r);
            t.row(&[seed.to_string(), num(2e-3), num(coarse)]);
        }
    }
    ch.le("largest residual", worst, 1e-6);
    if ctx.full() {
        ch.ge("smallest order ratio", worst_ratio, 3.0);
    }
    ch.artifact("duality_identity.csv", t.finish());
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn c10(ctx: &Ctx, ch: &mut Checks) -> Result<()> {
    let (sys, z, x0) = scalar_example();
    let ks: Vec<f64> = (1..=10).map(|e| 2f64.powi(e)).collect();

    let rows = stationary_convergence_study(&sys, &z, &ks)?;
    for (col, vals) in [
        ("x", rows.iter().map(|r| r.err_x).collect::<Vec<_>>()),
        ("u", rows.iter().map(|r| r.err_u).collect()),
        ("y", rows.iter().map(|r| r.err_y).collect()),
    ] {
        ch.holds(&format!("stationary err_{col} decreasing"), strictly_decreasing(&vals));
        ch.le(
            &format!("stationary err_{col} final/initial"),
            vals[vals.len() - 1] / vals[0],
            1e-2,
        );
    }
    ch.artifact("yosida_stationary_scalar.csv", crate::stationary::study_csv(&rows));

    let are = ctx.are(&sys)?;
    let prob = LqProblem::new(sys, 5.0, z, x0, are.p, 1e-3)?;
    let rows = yosida_dynamic_study(&prob, &ks, SolverChoice::Sweep)?;
    for (col, vals) in [
        ("u", rows.iter().map(|r| r.err_u).collect::<Vec<_>>()),
        ("x", rows.iter().map(|r| r.err_x).collect()),
        ("y", rows.iter().map(|r| r.err_y).collect()),
    ] {
        ch.holds(&format!("dynamic err_{col} decreasing"), strictly_decreasing(&vals));
        ch.le(
            &format!("dynamic err_{col} final/initial"),
            vals[vals.len() - 1] / vals[0],
            1e-2,
        );
    }
    ch.artifact("yosida_dynamic_scalar.csv", yosida_csv(&rows));

    let (heat_sys, heat_z) = heat_1d(50, HeatControl::BoundaryFlavored, "bump")?;
    let prob = LqProblem::tracking(heat_sys, 5.0, heat_z, DVector::zeros(50), 1e-2)?;
    let rows = yosida_dynamic_study(&prob, &[10.0, 100.0, 1000.0], SolverChoice::Transcription)?;
    let err_u: Vec<f64> = rows.iter().map(|r| r.err_u).collect();
    ch.holds("heat err_u decreasing", strictly_decreasing(&err_u));
    ch.notes.push(format!(
        "heat err_u = [{}]",
        err_u.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
    ));
    ch.artifact("yosida_dynamic_heat.csv", yosida_csv(&rows));
    Ok(())
}

const EPSILONS: [f64; 4] = [0.1, -0.1, 0.01, -0.01];

fn c11(_: &Ctx, ch: &mut Checks) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut t = Table::new(&["scenario", "kind", "sample", "epsilon", "margin"]);
    let (scalar, z1, x1) = scalar_example();
    let cases = [
        ("scalar", scalar, z1, x1),
        (
            "random_stable",
            random_4x4()?,
            DVector::from_element(4, 1.0),
            DVector::zeros(4),
        ),
    ];
    for (name, sys, z, x0) in &cases {
        let (n, m) = (sys.n(), sys.m());

        let stat = solve_stationary(sys, z)?;
        let base = stationary_cost(sys, z, &stat.x_bar, &stat.u_bar);
        let basis = feasible_directions(sys);
        let mut worst = f64::INFINITY;
        for k in 0..25 {
            let coeff = DVector::from_fn(basis.ncols(), |_, _| uniform(&mut rng));
            let dir = &basis * coeff.normalize();
            for eps in EPSILONS {
                let dx = dir.rows(0, n) * eps;
                let du = dir.rows(n, m) * eps;
                let margin = stationary_cost(sys, z, &(&stat.x_bar + dx), &(&stat.u_bar + du)) - base;
                worst = worst.min(margin);
                t.row(&[
                    name.to_string(),
                    "stationary".into(),
                    k.to_string(),
                    num(eps),
                    num(margin),
                ]);
            }
        }
        ch.ge(&format!("{name} stationary margin"), worst, -1e-12);

        let prob = LqProblem::tracking(sys.clone(), 2.0, z.clone(), x0.clone(), 1e-2)?;
        let sol = lq::solve_transcription_detailed(&prob)?;
        let raw = &sol.raw_controls;
        let base = lq::transcribed_cost(&prob, raw)?;
        let w = prob.weights();
        let (mut worst, mut first_order) = (f64::INFINITY, 0.0f64);
        for k in 0..25 {
            let wave = Wave::random(&mut rng, m);
            let dir = wave.samples(prob.horizon(), prob.steps());
            let norm = w
                .iter()
                .zip(&dir)
                .map(|(wi, d)| wi * d.norm_squared())
                .sum::<f64>()
                .sqrt();
            let mut pair = [0.0; 2];
            for (j, eps) in EPSILONS.into_iter().enumerate() {
                let perturbed: Vec<DVector<f64>> = raw.iter().zip(&dir).map(|(u, d)| u + d * (eps / norm)).collect();
                let margin = lq::transcribed_cost(&prob, &perturbed)? - base;
                worst = worst.min(margin);
                t.row(&[name.to_string(), "dynamic".into(), k.to_string(), num(eps), num(margin)]);
                pair[j % 2] = margin;
                if j % 2 == 1 {
                    first_order = first_order.max((pair[0] - pair[1]).abs() / (2.0 * eps.abs()));
                }
            }
        }
        ch.ge(&format!("{name} dynamic margin"), worst, -1e-12);
        ch.le(
            &format!("{name} first-order term"),
            first_order,
            1e-8 * (1.0 + base.abs()),
        );
    }
    ch.artifact("optimality_sampling.csv", t.finish());
    Ok(())
}

type CriterionFn = fn(&Ctx, &mut Checks) -> Result<()>;

const RUNNERS: [CriterionFn; 11] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11];

/// Runs criterion `id` (1 to 11).
pub fn run_criterion(id: u32, suite: Suite, fault: Option<Fault>) -> Result<CriterionOutcome> {
    let idx = id.checked_sub(1).map(|i| i as usize).filter(|&i| i < RUNNERS.len());
    let Some(idx) = idx else {
        return Err(Error::InvalidArgument(format!("criterion id {id} is not in 1..=11")));
    };
    let (_, name, limit) = CRITERIA[idx];
    let ctx = Ctx { suite, fault };
    let mut ch = Checks::new();
    let start = Instant::now();
    let res = RUNNERS[idx](&ctx, &mut ch);
    let seconds = start.elapsed().as_secs_f64();
    if let Err(e) = res {
        ch.ok = false;
        ch.notes.push(format!("error: {e}"));
    }
    if seconds > limit {
        ch.ok = false;
        ch.notes.push(format!("runtime {seconds:.2} s exceeds {limit} s"));
    }
    Ok(CriterionOutcome {
        id,
        name,
        passed: ch.ok,
        detail: ch.notes.join("; "),
        seconds,
        limit,
        artifacts: ch.artifacts,
    })
}

/// Criteria 1 to 11 in order.
pub fn run_criteria(suite: Suite, fault: Option<Fault>) -> Vec<CriterionOutcome> {
    (1..=11)
        .map(|id| run_criterion(id, suite, fault).expect("valid criterion id"))
        .collect()
}

/// Criterion 12: a fresh quick run reproduces the artifacts of `reference`
/// byte for byte (a second quick run is made when no reference is given),
/// and the full suite, when timed, stayed within its budget.
pub fn determinism_check(reference: Option<&[CriterionOutcome]>, full_seconds: Option<f64>) -> CriterionOutcome {
    let (_, name, limit) = CRITERIA[11];
    let start = Instant::now();
    let collect = |o: &[CriterionOutcome]| o.iter().flat_map(|c| c.artifacts.clone()).collect::<Vec<_>>();
    let first = match reference {
        Some(r) => collect(r),
        None => collect(&run_criteria(Suite::Quick, None)),
    };
    let second = collect(&run_criteria(Suite::Quick, None));
    let mut ch = Checks::new();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.file.as_str())
        .collect();
    ch.holds("same artifact list", first.len() == second.len());
    ch.holds("byte-identical artifacts", differing.is_empty());
    if !differing.is_empty() {
        ch.notes.push(format!("differing: {}", differing.join(", ")));
    } else {
        ch.notes.push(format!("{} artifacts identical", first.len()));
    }
    if let Some(s) = full_seconds {
        ch.le("full suite seconds", s, FULL_SUITE_LIMIT);
    }
    CriterionOutcome {
        id: 12,
        name,
        passed: ch.ok,
        detail: ch.notes.join("; "),
        seconds: start.elapsed().as_secs_f64(),
        limit,
        artifacts: Vec::new(),
    }
}

/// `id,name,passed` for every outcome; no timings, so the file is
/// reproducible.
pub fn outcomes_csv(outcomes: &[CriterionOutcome]) -> String {
    let mut t = Table::new(&["id", "name", "passed"]);
    for o in outcomes {
        t.row(&[o.id.to_string(), o.name.into(), o.passed.to_string()]);
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suite_and_fault() {
        assert_eq!("quick".parse::<Suite>().unwrap(), Suite::Quick);
        assert_eq!("full".parse::<Suite>().unwrap(), Suite::Full);
        assert!("slow".parse::<Suite>().is_err());
        assert_eq!("corrupt-are".parse::<Fault>().unwrap(), Fault::CorruptAre);
    }

    #[test]
    fn closed_form_criteria_pass() {
        for id in [1, 2] {
            let o = run_criterion(id, Suite::Quick, None).unwrap();
            assert!(o.passed, "{}", o.line());
        }
    }

    #[test]
    fn corrupted_are_fails_first_criterion() {
        let o = run_criterion(1, Suite::Quick, Some(Fault::CorruptAre)).unwrap();
        assert!(!o.passed);
        let o = run_criterion(4, Suite::Quick, Some(Fault::CorruptAre)).unwrap();
        assert!(!o.passed);
    }

    #[test]
    fn rejects_unknown_id() {
        assert!(run_criterion(0, Suite::Quick, None).is_err());
        assert!(run_criterion(12, Suite::Quick, None).is_err());
    }

    #[test]
    fn wave_samples_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Wave::random(&mut rng, 2);
        let s = w.samples(1.0, 4);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], w.b);
        assert!((&s[4] - w.at(1.0)).norm() == 0.0);
    }
}
