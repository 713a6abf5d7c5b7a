//! Turnpike diagnostics: distance of optimal trajectories to the optimal
//! steady state, the deviation `h = y - ybar - P (x - xbar)` and its exact
//! propagation by the adjoint closed-loop semigroup, decay-rate fits, the
//! energy identity and convergence under Yosida smoothing of `B`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::csv::{num, Table};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lq::{self, LqProblem, SolverChoice, Trajectory};
use crate::operators::{approx_control_operator, expm, LtiSystem};
use crate::riccati::{closed_loop_generator, AreSolution, DreField, DreSolution};
use crate::stationary::{check_increasing, StationaryTriple};

/// `h(t) = y(t) - ybar - P (x(t) - xbar)` at every node, with `P` the ARE
/// solution.
pub fn h_trajectory(traj: &Trajectory, stat: &StationaryTriple, are: &AreSolution) -> Result<Vec<DVector<f64>>> {
    let n = stat.x_bar.len();
    if are.p.nrows() != n || traj.x.iter().chain(&traj.y).any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(
            "trajectory, stationary triple and ARE solution have different state dimensions".into(),
        ));
    }
    Ok(traj
        .x
        .iter()
        .zip(&traj.y)
        .map(|(x, y)| y - &stat.y_bar - &are.p * (x - &stat.x_bar))
        .collect())
}

fn check_uniform(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch("grid needs at least two nodes".into()));
    }
    let dt = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let tol = 1e-9 * grid[grid.len() - 1].abs().max(1.0);
    if grid
        .iter()
        .enumerate()
        .any(|(i, t)| (t - grid[0] - i as f64 * dt).abs() > tol)
    {
        return Err(Error::GridMismatch("grid is not uniform".into()));
    }
    Ok(dt)
}

/// Largest `|g(t) - e^{t (A - BB^T P)^T} g(0)|` over the nodes, where
/// `g(t) = h(T - t)`.
pub fn propagation_residual(h: &[DVector<f64>], sys: &LtiSystem, are: &AreSolution, grid: &[f64]) -> Result<f64> {
    if h.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} deviation samples on a grid of {} nodes",
            h.len(),
            grid.len()
        )));
    }
    let dt = check_uniform(grid)?;
    let (gen, _) = closed_loop_generator(sys, are);
    let step = expm(&(gen.transpose() * dt));
    let mut prop = h[h.len() - 1].clone();
    let mut worst = 0.0f64;
    for g in h.iter().rev() {
        worst = worst.max((g - &prop).norm());
        prop = &step * prop;
    }
    Ok(worst)
}

/// `h_T(t) = y(t) - ybar - P_T(t) (x(t) - xbar)`, built with the
/// finite-horizon Riccati solution instead of the ARE one.
pub fn finite_horizon_deviation(
    traj: &Trajectory,
    stat: &StationaryTriple,
    dre: &DreSolution,
) -> Result<Vec<DVector<f64>>> {
    if dre.p_samples.len() != traj.len() {
        return Err(Error::GridMismatch("DRE and trajectory grids differ".into()));
    }
    Ok(traj
        .x
        .iter()
        .zip(&traj.y)
        .zip(&dre.p_samples)
        .map(|((x, y), p)| y - &stat.y_bar - p * (x - &stat.x_bar))
        .collect())
}

/// Largest deviation of `h_T` from the solution of
/// `h_T' = (-A^T + P_T B B^T) h_T` integrated backward from `h_T(T)` by RK4.
pub fn finite_horizon_residual(h_t: &[DVector<f64>], sys: &LtiSystem, dre: &DreSolution) -> Result<f64> {
    if h_t.len() != dre.grid.len() {
        return Err(Error::GridMismatch("deviation and DRE grids differ".into()));
    }
    let h = check_uniform(&dre.grid)?;
    let g = sys.control_gram();
    let at = sys.a().transpose();
    let field = DreField::new(sys);
    let ps = &dre.p_samples;
    let n_int = ps.len() - 1;
    // dh/ds = (A^T - P G) h in reversed time
    let rhs = |p: &DMatrix<f64>, v: &DVector<f64>| (&at - p * &g) * v;
    let mut cur = h_t[n_int].clone();
    let mut worst = 0.0f64;
    for i in (0..n_int).rev() {
        let d0 = -field.eval(&ps[i]);
        let d1 = -field.eval(&ps[i + 1]);
        let pm = (&ps[i] + &ps[i + 1]) * 0.5 + (d0 - d1) * (h / 8.0);
        let k1 = rhs(&ps[i + 1], &cur);
        let k2 = rhs(&pm, &(&cur + &k1 * (h / 2.0)));
        let k3 = rhs(&pm, &(&cur + &k2 * (h / 2.0)));
        let k4 = rhs(&ps[i], &(&cur + &k3 * h));
        cur += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        worst = worst.max((&h_t[i] - &cur).norm());
    }
    Ok(worst)
}

/// Least-squares fit of `log m = log c - lambda t` over the samples whose
/// time lies in `window`. Magnitudes are floored at `1e-300`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let eps = 1e-12 * window.1.abs().max(1.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 - eps && *t <= window.1 + eps)
        .collect();
    if pts.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "fitting window [{}, {}] holds {} samples, need at least 5",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if pts.iter().all(|(_, m)| *m == 0.0) {
        return Err(Error::UndefinedRate);
    }
    let k = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let logs: Vec<f64> = pts.iter().map(|p| p.1.max(1e-300).ln()).collect();
    let lm = logs.iter().sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&logs).map(|(p, l)| (p.0 - tm) * (l - lm)).sum();
    let slope = sxy / sxx;
    Ok(((lm - slope * tm).exp(), -slope))
}

/// Inputs of a turnpike run shared by all horizons.
#[derive(Debug, Clone)]
pub struct TurnpikeConfig {
    pub target: DVector<f64>,
    pub x0: DVector<f64>,
    pub dt: f64,
    pub solver: SolverChoice,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeReport {
    pub horizon: f64,
    pub grid: Vec<f64>,
    /// `|x(t) - xbar|`
    pub gap_x: Vec<f64>,
    /// `|y(t) - ybar|`
    pub gap_y: Vec<f64>,
    /// `L^2` norm of `u - ubar` over the window `I_t` between `t` and `T - t`.
    pub gap_u_window: Vec<f64>,
    pub h_norm: Vec<f64>,
    /// Smallest `c` with `gap_x + gap_y <= c (e^{-lt} + e^{-l(T-t)}) (|x0 - xbar| + |ybar|)`
    /// at every node up to an absolute roundoff floor, `l = lambda_reference`.
    pub fitted_c: f64,
    /// Rate from the log-linear fit of both boundary layers. `None` when the
    /// gaps vanish identically.
    pub fitted_lambda: Option<f64>,
    /// Amplitude of the same fit, divided by `|x0 - xbar| + |ybar|`.
    pub layer_amplitude: Option<f64>,
    pub lambda_reference: f64,
    pub propagation_residual: f64,
    /// Constant used for the bound, uniform over all horizons of the run.
    pub uniform_c: f64,
    /// The state/adjoint and control-window bounds hold at every node with
    /// the uniform constant.
    pub bound_satisfied: bool,
}

impl TurnpikeReport {
    pub fn midpoint_gap_x(&self) -> f64 {
        self.gap_x[self.gap_x.len() / 2]
    }
}

/// Absolute floor below which gaps count as zero.
const GAP_FLOOR: f64 = 1e-9;

fn gap_floor(stat: &StationaryTriple) -> f64 {
    GAP_FLOOR * (1.0 + stat.x_bar.norm() + stat.y_bar.norm())
}

struct HorizonData {
    report: TurnpikeReport,
    scale: f64,
}

fn window_norms(traj: &Trajectory, u_bar: &DVector<f64>, dt: f64) -> Vec<f64> {
    let sq: Vec<f64> = traj.u.iter().map(|u| (u - u_bar).norm_squared()).collect();
    let mut prefix = vec![0.0; sq.len()];
    for i in 1..sq.len() {
        prefix[i] = prefix[i - 1] + 0.5 * dt * (sq[i - 1] + sq[i]);
    }
    let last = sq.len() - 1;
    (0..sq.len())
        .map(|i| {
            let (lo, hi) = (i.min(last - i), i.max(last - i));
            (prefix[hi] - prefix[lo]).max(0.0).sqrt()
        })
        .collect()
}

fn analyze_horizon(
    sys: &LtiSystem,
    stat: &StationaryTriple,
    are: &AreSolution,
    lambda_ref: f64,
    horizon: f64,
    cfg: &TurnpikeConfig,
) -> Result<HorizonData> {
    let prob = LqProblem::tracking(sys.clone(), horizon, cfg.target.clone(), cfg.x0.clone(), cfg.dt)?;
    let traj = lq::solve(&prob, cfg.solver)?;
    let h = h_trajectory(&traj, stat, are)?;
    let residual = propagation_residual(&h, sys, are, &traj.grid)?;
    let gap_x: Vec<f64> = traj.x.iter().map(|x| (x - &stat.x_bar).norm()).collect();
    let gap_y: Vec<f64> = traj.y.iter().map(|y| (y - &stat.y_bar).norm()).collect();
    let gap_u_window = window_norms(&traj, &stat.u_bar, cfg.dt);
    let scale = (&cfg.x0 - &stat.x_bar).norm() + stat.y_bar.norm();

    // Gaps under the floor are roundoff; dividing them by a vanishing
    // envelope would make c grow like e^{lambda T / 2}.
    let floor = gap_floor(stat);
    let envelope = |t: f64| (-lambda_ref * t).exp() + (-lambda_ref * (horizon - t)).exp();
    let fitted_c = if scale > 0.0 {
        traj.grid
            .iter()
            .enumerate()
            .map(|(i, &t)| (gap_x[i] + gap_y[i] - floor).max(0.0) / (envelope(t) * scale))
            .fold(0.0, f64::max)
    } else {
        0.0
    };

    let layer = (horizon / 2.0).min(5.0 / lambda_ref);
    let total: Vec<f64> = gap_x.iter().zip(&gap_y).map(|(a, b)| a + b).collect();
    let mut series: Vec<(f64, f64)> = traj.grid.iter().copied().zip(total.iter().copied()).collect();
    series.extend(traj.grid.iter().map(|t| horizon - t).zip(total.iter().copied()));
    let (fitted_lambda, layer_amplitude) = match fit_decay_rate(&series, (0.1 * layer, 0.9 * layer)) {
        Ok((c, l)) => (Some(l), (scale > 0.0).then(|| c / scale)),
        Err(Error::UndefinedRate | Error::InvalidArgument(_)) => (None, None),
        Err(e) => return Err(e),
    };

    Ok(HorizonData {
        report: TurnpikeReport {
            horizon,
            grid: traj.grid.clone(),
            gap_x,
            gap_y,
            gap_u_window,
            h_norm: h.iter().map(|v| v.norm()).collect(),
            fitted_c,
            fitted_lambda,
            layer_amplitude,
            lambda_reference: lambda_ref,
            propagation_residual: residual,
            uniform_c: 0.0,
            bound_satisfied: false,
        },
        scale,
    })
}

/// Solves the tracking problem (zero terminal cost) for every horizon and
/// measures the turnpike estimate. The bound constant is the largest of the
/// per-horizon minimal constants, so it is uniform in `T` by construction;
/// the content of the check is that it stays bounded as `T` grows and that
/// the control-window estimate holds with the same constant.
pub fn verify_turnpike(
    sys: &LtiSystem,
    stat: &StationaryTriple,
    are: &AreSolution,
    horizons: &[f64],
    cfg: &TurnpikeConfig,
) -> Result<Vec<TurnpikeReport>> {
    if horizons.is_empty() {
        return Err(Error::InvalidArgument("horizon list is empty".into()));
    }
    let (_, lambda_ref) = closed_loop_generator(sys, are);
    if !(lambda_ref > 0.0) {
        return Err(Error::HypothesisViolation(format!(
            "closed-loop decay rate {lambda_ref} is not positive"
        )));
    }
    let mut data = horizons
        .par_iter()
        .map(|&t| analyze_horizon(sys, stat, are, lambda_ref, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    data.sort_by(|a, b| a.report.horizon.total_cmp(&b.report.horizon));

    let uniform_c = data.iter().map(|d| d.report.fitted_c).fold(0.0, f64::max);
    let floor = gap_floor(stat);
    for d in &mut data {
        let r = &mut d.report;
        let horizon = r.horizon;
        let ok = r.grid.iter().enumerate().all(|(i, &t)| {
            let bound = uniform_c * ((-lambda_ref * t).exp() + (-lambda_ref * (horizon - t)).exp()) * d.scale;
            let slack = bound * 1e-12 + floor;
            r.gap_x[i] + r.gap_y[i] <= bound + slack && r.gap_u_window[i] <= bound + slack
        });
        r.uniform_c = uniform_c;
        r.bound_satisfied = ok;
    }
    Ok(data.into_iter().map(|d| d.report).collect())
}

/// Rows `T,t,gap_x,gap_y,gap_u_window,h_norm` for every report.
pub fn reports_csv(reports: &[TurnpikeReport]) -> String {
    let mut t = Table::new(&["T", "t", "gap_x", "gap_y", "gap_u_window", "h_norm"]);
    for r in reports {
        for i in 0..r.grid.len() {
            t.row(&[
                num(r.horizon),
                num(r.grid[i]),
                num(r.gap_x[i]),
                num(r.gap_y[i]),
                num(r.gap_u_window[i]),
                num(r.h_norm[i]),
            ]);
        }
    }
    t.finish()
}

/// One row per horizon: `T,fitted_c,fitted_lambda,lambda_reference,propagation_residual,bound_satisfied`.
pub fn summary_csv(reports: &[TurnpikeReport]) -> String {
    let mut t = Table::new(&[
        "T",
        "fitted_c",
        "fitted_lambda",
        "lambda_reference",
        "propagation_residual",
        "bound_satisfied",
    ]);
    for r in reports {
        t.row(&[
            num(r.horizon),
            num(r.fitted_c),
            r.fitted_lambda.map_or_else(|| "NaN".to_string(), num),
            num(r.lambda_reference),
            num(r.propagation_residual),
            r.bound_satisfied.to_string(),
        ]);
    }
    t.finish()
}

/// Both sides of the energy identity
/// `int |u - ubar|^2 + |C(x - xbar)|^2 = <x0 - xbar, y(0) - ybar> - <x(T) - xbar, y(T) - ybar>`
/// and of its Cauchy-Schwarz bound.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyDiagnostics {
    pub lhs: f64,
    pub identity_rhs: f64,
    pub identity_residual: f64,
    pub cauchy_schwarz_rhs: f64,
    /// `cauchy_schwarz_rhs - lhs`; nonnegative up to quadrature error.
    pub cauchy_schwarz_margin: f64,
}

/// Composite Simpson weights on the problem grid, falling back to the
/// trapezoid rule for an odd number of intervals.
fn simpson_weights(prob: &LqProblem) -> Vec<f64> {
    let steps = prob.steps();
    if steps % 2 == 1 {
        return prob.weights();
    }
    let h = prob.dt() / 3.0;
    (0..=steps)
        .map(|i| match i {
            0 => h,
            i if i == steps => h,
            i if i % 2 == 1 => 4.0 * h,
            _ => 2.0 * h,
        })
        .collect()
}

/// The integral is evaluated by composite Simpson, so the identity residual
/// measures the solver error rather than the quadrature error.
pub fn energy_diagnostics(prob: &LqProblem, traj: &Trajectory, stat: &StationaryTriple) -> Result<EnergyDiagnostics> {
    if traj.len() != prob.steps() + 1 {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} nodes, problem grid has {}",
            traj.len(),
            prob.steps() + 1
        )));
    }
    let c = prob.sys().c();
    let lhs: f64 = simpson_weights(prob)
        .iter()
        .zip(traj.x.iter().zip(&traj.u))
        .map(|(w, (x, u))| w * ((u - &stat.u_bar).norm_squared() + (c * (x - &stat.x_bar)).norm_squared()))
        .sum();
    let last = traj.len() - 1;
    let dx0 = &traj.x[0] - &stat.x_bar;
    let dy0 = &traj.y[0] - &stat.y_bar;
    let dxt = &traj.x[last] - &stat.x_bar;
    let dyt = &traj.y[last] - &stat.y_bar;
    let identity_rhs = dx0.dot(&dy0) - dxt.dot(&dyt);
    let cs = dx0.norm() * dy0.norm() + dxt.norm() * dyt.norm();
    Ok(EnergyDiagnostics {
        lhs,
        identity_rhs,
        identity_residual: (lhs - identity_rhs).abs(),
        cauchy_schwarz_rhs: cs,
        cauchy_schwarz_margin: cs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YosidaRow {
    pub k: f64,
    /// `L^2(0, T)` distance of the controls.
    pub err_u: f64,
    /// Largest nodal state distance.
    pub err_x: f64,
    /// Largest nodal adjoint distance.
    pub err_y: f64,
}

/// Solves the problem with `B` replaced by `B_k` for every `k` and measures
/// the distance to the solution with the exact `B`.
pub fn yosida_dynamic_study(prob: &LqProblem, ks: &[f64], solver: SolverChoice) -> Result<Vec<YosidaRow>> {
    check_increasing(ks)?;
    let exact = lq::solve(prob, solver)?;
    let w = prob.weights();
    let mut rows = ks
        .par_iter()
        .map(|&k| {
            let bk = approx_control_operator(prob.sys(), k)?;
            let approx = lq::solve(&prob.with_system(prob.sys().with_control(bk)?)?, solver)?;
            let err_u = w
                .iter()
                .zip(approx.u.iter().zip(&exact.u))
                .map(|(wi, (a, b))| wi * (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            Ok(YosidaRow {
                k,
                err_u,
                err_x: linalg::max_node_distance(&approx.x, &exact.x),
                err_y: linalg::max_node_distance(&approx.y, &exact.y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(rows)
}

pub fn yosida_csv(rows: &[YosidaRow]) -> String {
    let mut t = Table::new(&["k", "err_u", "err_x", "err_y"]);
    for r in rows {
        t.row(&[num(r.k), num(r.err_u), num(r.err_x), num(r.err_y)]);
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{solve_are, solve_dre};
    use crate::stationary::solve_stationary;

    fn scalar() -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn fit_exact_exponential() {
        let s: Vec<(f64, f64)> = (0..=500)
            .map(|i| (i as f64 * 0.01, (-2.0 * i as f64 * 0.01).exp()))
            .collect();
        let (c, l) = fit_decay_rate(&s, (0.0, 5.0)).unwrap();
        assert!((c - 1.0).abs() < 1e-10 && (l - 2.0).abs() < 1e-10);

        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0)).collect();
        let (_, l) = fit_decay_rate(&flat, (0.0, 9.0)).unwrap();
        assert!(l.abs() < 1e-14);

        let zero: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.0)).collect();
        assert!(matches!(fit_decay_rate(&zero, (0.0, 9.0)), Err(Error::UndefinedRate)));
        assert!(fit_decay_rate(&flat, (0.0, 2.0)).is_err());
    }

    #[test]
    fn window_is_empty_at_the_midpoint() {
        let traj = Trajectory {
            grid: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            x: vec![v1(0.0); 5],
            y: vec![v1(0.0); 5],
            u: vec![v1(1.0); 5],
            method: lq::Method::Transcription,
        };
        let w = window_norms(&traj, &v1(0.0), 1.0);
        assert_eq!(w[2], 0.0);
        assert!((w[0] - 2.0).abs() < 1e-15 && (w[4] - 2.0).abs() < 1e-15);
        assert!((w[1] - 2f64.sqrt()).abs() < 1e-15 && w[1] == w[3]);
    }

    #[test]
    fn zero_problem_has_zero_deviation() {
        let sys = scalar();
        let are = solve_are(&sys).unwrap();
        let stat = solve_stationary(&sys, &v1(0.0)).unwrap();
        let prob = LqProblem::tracking(sys.clone(), 2.0, v1(0.0), v1(0.0), 1e-2).unwrap();
        let traj = lq::solve_transcription(&prob).unwrap();
        let h = h_trajectory(&traj, &stat, &are).unwrap();
        assert!(h.iter().all(|v| v.norm() == 0.0));
        assert_eq!(propagation_residual(&h, &sys, &are, &traj.grid).unwrap(), 0.0);
        let e = energy_diagnostics(&prob, &traj, &stat).unwrap();
        assert_eq!((e.lhs, e.cauchy_schwarz_rhs), (0.0, 0.0));
    }

    #[test]
    fn scalar_deviation_is_tiny_at_the_start() {
        let sys = scalar();
        let are = solve_are(&sys).unwrap();
        let stat = solve_stationary(&sys, &v1(1.0)).unwrap();
        let prob = LqProblem::tracking(sys.clone(), 10.0, v1(1.0), v1(0.0), 1e-3).unwrap();
        let traj = lq::solve_transcription(&prob).unwrap();
        let h = h_trajectory(&traj, &stat, &are).unwrap();
        assert!(h[0].norm() < 1e-4);
        let res = propagation_residual(&h, &sys, &are, &traj.grid).unwrap();
        assert!(res <= 1e-6, "{res}");
    }

    #[test]
    fn finite_horizon_deviation_follows_its_equation() {
        let sys = scalar();
        let stat = solve_stationary(&sys, &v1(1.0)).unwrap();
        let prob = LqProblem::tracking(sys.clone(), 3.0, v1(1.0), v1(0.0), 1e-3).unwrap();
        let traj = lq::solve_riccati_sweep(&prob).unwrap();
        let dre = solve_dre(&sys, 3.0, &DMatrix::zeros(1, 1), prob.steps()).unwrap();
        let h_t = finite_horizon_deviation(&traj, &stat, &dre).unwrap();
        assert!(finite_horizon_residual(&h_t, &sys, &dre).unwrap() < 1e-9);
    }

    #[test]
    fn scalar_turnpike_run() {
        let sys = scalar();
        let are = solve_are(&sys).unwrap();
        let stat = solve_stationary(&sys, &v1(1.0)).unwrap();
        let cfg = TurnpikeConfig {
            target: v1(1.0),
            x0: v1(0.0),
            dt: 1e-3,
            solver: SolverChoice::Sweep,
        };
        let reps = verify_turnpike(&sys, &stat, &are, &[5.0, 10.0, 20.0], &cfg).unwrap();
        assert!(reps.iter().all(|r| r.bound_satisfied));
        assert!(reps[2].midpoint_gap_x() <= 0.2 * reps[1].midpoint_gap_x());
        assert!(reps[1].midpoint_gap_x() < 1e-2);
        let l = reps[2].fitted_lambda.unwrap();
        assert!((l - 2f64.sqrt()).abs() <= 0.02 * 2f64.sqrt(), "{l}");
        let summary = summary_csv(&reps);
        assert_eq!(summary.lines().count(), 4);
        assert!(summary.lines().skip(1).all(|l| l.ends_with(",true")));
    }

    #[test]
    fn trivial_turnpike_run() {
        let sys = scalar();
        let are = solve_are(&sys).unwrap();
        let stat = solve_stationary(&sys, &v1(0.0)).unwrap();
        let cfg = TurnpikeConfig {
            target: v1(0.0),
            x0: v1(0.0),
            dt: 1e-2,
            solver: SolverChoice::Transcription,
        };
        let reps = verify_turnpike(&sys, &stat, &are, &[2.0], &cfg).unwrap();
        assert!(reps[0].bound_satisfied);
        assert!(reps[0].fitted_lambda.is_none());
        assert!(summary_csv(&reps).contains(",NaN,"));
    }

    #[test]
    fn energy_identity_scalar() {
        let sys = scalar();
        let stat = solve_stationary(&sys, &v1(1.0)).unwrap();
        let prob = LqProblem::tracking(sys, 10.0, v1(1.0), v1(0.0), 1e-3).unwrap();
        let traj = lq::solve_transcription(&prob).unwrap();
        let e = energy_diagnostics(&prob, &traj, &stat).unwrap();
        assert!(e.identity_residual <= 1e-6, "{}", e.identity_residual);
        assert!(e.cauchy_schwarz_margin >= -1e-6);
    }

    #[test]
    fn yosida_study_with_identity_resolvent() {
        let sys = LtiSystem::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let prob = LqProblem::tracking(sys, 2.0, v1(1.0), v1(0.0), 1e-2).unwrap();
        let rows = yosida_dynamic_study(&prob, &[1.0, 10.0], SolverChoice::Transcription).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.err_u < 1e-12 && r.err_x < 1e-12 && r.err_y < 1e-12));
    }

    #[test]
    fn yosida_study_scalar_decreases() {
        let prob = LqProblem::tracking(scalar(), 10.0, v1(1.0), v1(0.0), 1e-3).unwrap();
        let ks: Vec<f64> = (1..=10).map(|j| 2f64.powi(j)).collect();
        let rows = yosida_dynamic_study(&prob, &ks, SolverChoice::Transcription).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].err_u < w[0].err_u && w[1].err_x < w[0].err_x && w[1].err_y < w[0].err_y);
        }
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        assert!(last.err_u <= 1e-2 * first.err_u);
        assert!(last.err_x <= 1e-2 * first.err_x);
        assert!(last.err_y <= 1e-2 * first.err_y);
        assert!(yosida_csv(&rows).starts_with("k,err_u,err_x,err_y\n"));
    }
}
