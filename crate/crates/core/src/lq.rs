//! Finite-horizon tracking problem
//!
//! ```text
//! minimize  int_0^T |Cx - z|^2 + |u|^2 dt + <P0 x(T), x(T)>
//! subject to x' = Ax + Bu, x(0) = x0
//! ```
//!
//! solved two independent ways: a discretize-then-optimize transcription
//! with the implicit trapezoid rule, and a Riccati sweep with a feedforward
//! term for the target. Both report the adjoint `y` with `u = -B^T y`,
//! `y' = -A^T y - C^T (Cx - z)`, `y(T) = P0 x(T)`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::csv::{num, Table};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::LtiSystem;
use crate::riccati::{self, check_explicit_step, rk4_linear, solve_are, solve_dre, DreField, RK4_STABILITY};

/// Largest `N (n + m)` the transcription accepts.
pub const MEMORY_CAP: usize = 2_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct LqProblem {
    sys: LtiSystem,
    horizon: f64,
    target: DVector<f64>,
    x0: DVector<f64>,
    p0: DMatrix<f64>,
    dt: f64,
    steps: usize,
}

impl LqProblem {
    pub fn new(
        sys: LtiSystem,
        horizon: f64,
        target: DVector<f64>,
        x0: DVector<f64>,
        p0: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let n = sys.n();
        if target.len() != n || x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "target and initial state must have length {n}, got {} and {}",
                target.len(),
                x0.len()
            )));
        }
        if p0.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "terminal matrix must be {n}x{n}, got {}x{}",
                p0.nrows(),
                p0.ncols()
            )));
        }
        if target.iter().chain(x0.iter()).any(|v| !v.is_finite()) || !linalg::all_finite(&p0) {
            return Err(Error::NonFinite("problem data".into()));
        }
        let pn = p0.norm();
        if (&p0 - p0.transpose()).norm() > 1e-12 * pn || (pn > 0.0 && linalg::min_sym_eigenvalue(&p0) < -1e-10 * pn) {
            return Err(Error::InvalidArgument(
                "terminal matrix must be symmetric positive semidefinite".into(),
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon and step must be positive, got T = {horizon}, dt = {dt}"
            )));
        }
        let steps = (horizon / dt).round();
        if steps < 2.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} does not divide T = {horizon} into at least two steps"
            )));
        }
        Ok(Self {
            sys,
            horizon,
            target,
            x0,
            p0,
            dt,
            steps: steps as usize,
        })
    }

    /// Problem with zero terminal cost.
    pub fn tracking(sys: LtiSystem, horizon: f64, target: DVector<f64>, x0: DVector<f64>, dt: f64) -> Result<Self> {
        let n = sys.n();
        Self::new(sys, horizon, target, x0, DMatrix::zeros(n, n), dt)
    }

    pub fn sys(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of intervals `N = T / dt`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> Vec<f64> {
        riccati::uniform_grid(self.horizon, self.steps)
    }

    /// Trapezoid weights on the grid.
    pub fn weights(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| {
                if i == 0 || i == self.steps {
                    0.5 * self.dt
                } else {
                    self.dt
                }
            })
            .collect()
    }

    pub fn with_system(&self, sys: LtiSystem) -> Result<Self> {
        Self::new(
            sys,
            self.horizon,
            self.target.clone(),
            self.x0.clone(),
            self.p0.clone(),
            self.dt,
        )
    }

    pub fn with_grid(&self, horizon: f64, dt: f64) -> Result<Self> {
        Self::new(
            self.sys.clone(),
            horizon,
            self.target.clone(),
            self.x0.clone(),
            self.p0.clone(),
            dt,
        )
    }

    pub fn with_terminal_cost(&self, p0: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.sys.clone(),
            self.horizon,
            self.target.clone(),
            self.x0.clone(),
            p0,
            self.dt,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Transcription,
    RiccatiSweep,
    ClosedLoop,
}

/// Nodal samples of state, adjoint and control.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub method: Method,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    /// Largest `|u + B^T y|` over the nodes.
    pub fn control_residual(&self, sys: &LtiSystem) -> f64 {
        let bt = sys.b().transpose();
        self.u
            .iter()
            .zip(&self.y)
            .map(|(u, y)| (u + &bt * y).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["t", "kind", "index", "value"]);
        for (i, time) in self.grid.iter().enumerate() {
            for (kind, v) in [("x", &self.x[i]), ("y", &self.y[i]), ("u", &self.u[i])] {
                for (j, value) in v.iter().enumerate() {
                    t.row(&[num(*time), kind.into(), j.to_string(), num(*value)]);
                }
            }
        }
        t.finish()
    }
}

/// Which finite-horizon solver to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Riccati sweep, or transcription when the sweep would need more than
    /// `MAX_SUBSTEPS` substeps per interval.
    #[default]
    Auto,
    Transcription,
    Sweep,
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "transcription" => Ok(Self::Transcription),
            "sweep" => Ok(Self::Sweep),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver '{other}', expected auto, transcription or sweep"
            ))),
        }
    }
}

pub fn solve(prob: &LqProblem, choice: SolverChoice) -> Result<Trajectory> {
    match choice {
        SolverChoice::Transcription => solve_transcription(prob),
        SolverChoice::Sweep => solve_riccati_sweep(prob),
        SolverChoice::Auto => match solve_riccati_sweep(prob) {
            Err(Error::TooStiff { .. }) => solve_transcription(prob),
            other => other,
        },
    }
}

/// Transcription output with the raw discrete unknowns kept alongside the
/// reported trajectory.
#[derive(Debug, Clone)]
pub struct TranscriptionSolution {
    pub trajectory: Trajectory,
    /// Control unknowns of the discrete problem. They coincide with the
    /// reported controls except at the two end nodes.
    pub raw_controls: Vec<DVector<f64>>,
    /// Multipliers of the `N` discrete dynamics constraints.
    pub multipliers: Vec<DVector<f64>>,
    /// Largest residual of the discrete dynamics and control-stationarity
    /// equations, divided by `dt`.
    pub kkt_residual: f64,
}

struct Discretization {
    et_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    e: DMatrix<f64>,
    f: DMatrix<f64>,
    /// `E^{-1} F`
    phi: DMatrix<f64>,
    /// `(dt/2) E^{-1} B`
    gamma: DMatrix<f64>,
}

impl Discretization {
    fn new(prob: &LqProblem) -> Result<Self> {
        let n = prob.sys.n();
        let half = 0.5 * prob.dt;
        let e = DMatrix::identity(n, n) - prob.sys.a() * half;
        let f = DMatrix::identity(n, n) + prob.sys.a() * half;
        let e_lu = e.clone().lu();
        let singular = || Error::Numerical("implicit trapezoid matrix I - (dt/2)A is singular".into());
        let phi = e_lu.solve(&f).ok_or_else(singular)?;
        let gamma = e_lu.solve(&(prob.sys.b() * half)).ok_or_else(singular)?;
        Ok(Self {
            et_lu: e.transpose().lu(),
            e,
            f,
            phi,
            gamma,
        })
    }

    fn step(&self, x: &DVector<f64>, u0: &DVector<f64>, u1: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma * (u0 + u1)
    }
}

/// Discretize-then-optimize solve. See [`solve_transcription_detailed`].
pub fn solve_transcription(prob: &LqProblem) -> Result<Trajectory> {
    Ok(solve_transcription_detailed(prob)?.trajectory)
}

/// Minimizes the trapezoid-quadrature cost subject to the implicit
/// trapezoid dynamics `E x_{i+1} = F x_i + (dt/2) B (u_i + u_{i+1})`,
/// `E = I - (dt/2)A`, `F = I + (dt/2)A`.
///
/// The KKT system is block banded; it is solved exactly by eliminating the
/// nodes backward in time (dynamic programming on the pair `(x_i, u_i)`),
/// which costs `O(N (n+m)^3)` and stores only the `N` feedback gains.
/// Multipliers `mu_i` of the constraints are then recovered by the adjoint
/// recursion. They approximate `y` at the interval midpoints; the reported
/// nodal adjoint is their average in the interior and a half-step
/// correction at the ends.
pub fn solve_transcription_detailed(prob: &LqProblem) -> Result<TranscriptionSolution> {
    let sys = &prob.sys;
    let (n, m, big_n) = (sys.n(), sys.m(), prob.steps);
    let d = n + m;
    let unknowns = big_n * d;
    if unknowns > MEMORY_CAP {
        return Err(Error::MemoryCap {
            unknowns,
            cap: MEMORY_CAP,
        });
    }
    let disc = Discretization::new(prob)?;
    let q = sys.observation_gram();
    let cz = sys.c().transpose() * &prob.target;
    let w = prob.weights();

    let mut trans = DMatrix::<f64>::zeros(d, d);
    trans.view_mut((0, 0), (n, n)).copy_from(&disc.phi);
    trans.view_mut((0, n), (n, m)).copy_from(&disc.gamma);
    let mut input = DMatrix::<f64>::zeros(d, m);
    input.view_mut((0, 0), (n, m)).copy_from(&disc.gamma);
    input.view_mut((n, 0), (m, m)).fill_with_identity();

    let stage = |wi: f64| {
        let mut l = DMatrix::<f64>::zeros(d, d);
        l.view_mut((0, 0), (n, n)).copy_from(&(&q * (0.5 * wi)));
        l.view_mut((n, n), (m, m)).fill_diagonal(0.5 * wi);
        let mut lv = DVector::<f64>::zeros(d);
        lv.rows_mut(0, n).copy_from(&(&cz * (-0.5 * wi)));
        (l, lv)
    };

    // Value function V_i(xi) = xi^T S xi + 2 s^T xi + const.
    let (mut s_mat, mut s_vec) = stage(w[big_n]);
    {
        let mut tl = s_mat.view_mut((0, 0), (n, n));
        tl += &prob.p0 * 0.5;
    }
    let mut gains: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(big_n);
    let tt = trans.transpose();
    for i in (0..big_n).rev() {
        let sn = &s_mat * &input;
        let h = linalg::symmetrize(&(input.transpose() * &sn));
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("transcription KKT system is singular".into()))?;
        let nsm = sn.transpose() * &trans;
        let gain = -chol.solve(&nsm);
        let offset = -chol.solve(&(input.transpose() * &s_vec));
        let msn = &tt * &sn;
        let (l, lv) = stage(w[i]);
        s_mat = linalg::symmetrize(&(l + &tt * &s_mat * &trans + &msn * &gain));
        s_vec = lv + &tt * &s_vec + &msn * &offset;
        gains.push((gain, offset));
    }
    gains.reverse();

    let s_uu = s_mat.view((n, n), (m, m)).into_owned();
    let s_ux = s_mat.view((n, 0), (m, n)).into_owned();
    let rhs = -(s_ux * &prob.x0 + s_vec.rows(n, m));
    let u_first = s_uu
        .cholesky()
        .ok_or_else(|| Error::Numerical("transcription KKT system is singular".into()))?
        .solve(&rhs);

    let mut xs = Vec::with_capacity(big_n + 1);
    let mut us = Vec::with_capacity(big_n + 1);
    xs.push(prob.x0.clone());
    us.push(u_first);
    let mut xi = DVector::<f64>::zeros(d);
    for (i, (gain, offset)) in gains.iter().enumerate() {
        xi.rows_mut(0, n).copy_from(&xs[i]);
        xi.rows_mut(n, m).copy_from(&us[i]);
        let next_u = gain * &xi + offset;
        let next_x = disc.step(&xs[i], &us[i], &next_u);
        if !next_x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                t: (i + 1) as f64 * prob.dt,
                norm: next_x.norm(),
            });
        }
        xs.push(next_x);
        us.push(next_u);
    }

    let sys_c = sys.c();
    let grad = |i: usize| sys_c.transpose() * (sys_c * &xs[i] - &prob.target);
    let et_solve = |v: DVector<f64>| {
        disc.et_lu
            .solve(&v)
            .ok_or_else(|| Error::Numerical("singular E^T in multiplier recursion".into()))
    };
    let mut mu = vec![DVector::<f64>::zeros(n); big_n];
    mu[big_n - 1] = et_solve(grad(big_n) * w[big_n] + &prob.p0 * &xs[big_n])?;
    for i in (1..big_n).rev() {
        mu[i - 1] = et_solve(grad(i) * w[i] + disc.f.transpose() * &mu[i])?;
    }

    let half = 0.5 * prob.dt;
    let bt = sys.b().transpose();
    let mut residual = 0.0f64;
    for i in 0..big_n {
        let r = &disc.e * &xs[i + 1] - &disc.f * &xs[i] - sys.b() * ((&us[i] + &us[i + 1]) * half);
        residual = residual.max(r.norm() / prob.dt);
    }
    for i in 0..=big_n {
        let mut s = DVector::<f64>::zeros(n);
        if i > 0 {
            s += &mu[i - 1];
        }
        if i < big_n {
            s += &mu[i];
        }
        let r = &us[i] * w[i] + &bt * s * half;
        residual = residual.max(r.norm() / prob.dt);
    }

    let mut ys = Vec::with_capacity(big_n + 1);
    ys.push(disc.f.transpose() * &mu[0] + grad(0) * half);
    for i in 1..big_n {
        ys.push((&mu[i - 1] + &mu[i]) * 0.5);
    }
    ys.push(&prob.p0 * &xs[big_n]);
    let reported_u = ys.iter().map(|y| -(&bt * y)).collect();

    Ok(TranscriptionSolution {
        trajectory: Trajectory {
            grid: prob.grid(),
            x: xs,
            y: ys,
            u: reported_u,
            method: Method::Transcription,
        },
        raw_controls: us,
        multipliers: mu,
        kkt_residual: residual,
    })
}

/// Cost of the discrete problem the transcription minimizes: trapezoid
/// dynamics driven by nodal controls, trapezoid quadrature of the running
/// cost, plus the terminal term.
pub fn transcribed_cost(prob: &LqProblem, controls: &[DVector<f64>]) -> Result<f64> {
    check_samples(prob, controls, prob.sys.m(), "controls")?;
    let disc = Discretization::new(prob)?;
    let w = prob.weights();
    let c = prob.sys.c();
    let mut x = prob.x0.clone();
    let mut total = 0.0;
    for i in 0..=prob.steps {
        total += w[i] * ((c * &x - &prob.target).norm_squared() + controls[i].norm_squared());
        if i < prob.steps {
            x = disc.step(&x, &controls[i], &controls[i + 1]);
        }
    }
    Ok(total + x.dot(&(&prob.p0 * &x)))
}

fn check_samples(prob: &LqProblem, v: &[DVector<f64>], dim: usize, what: &str) -> Result<()> {
    if v.len() != prob.steps + 1 {
        return Err(Error::GridMismatch(format!(
            "{what} have {} samples, grid has {} nodes",
            v.len(),
            prob.steps + 1
        )));
    }
    if v.iter().any(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch(format!("{what} must have dimension {dim}")));
    }
    Ok(())
}

/// Cubic Hermite interpolant on an interval of length `h` at the fraction
/// `theta` of the interval.
fn hermite<T>(v0: &T, v1: &T, d0: &T, d1: &T, h: f64, theta: f64) -> T
where
    for<'a> &'a T: std::ops::Mul<f64, Output = T>,
    T: std::ops::Add<T, Output = T>,
{
    let t2 = theta * theta;
    let t3 = t2 * theta;
    v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + d0 * (h * (t3 - 2.0 * t2 + theta))
        + v1 * (3.0 * t2 - 2.0 * t3)
        + d1 * (h * (t3 - t2))
}

/// Upper bound on explicit substeps per grid interval before the sweep
/// gives up with [`Error::TooStiff`].
const MAX_SUBSTEPS: usize = 512;

/// Riccati sweep: `y = P_T x + r` where `P_T` solves the DRE and the
/// feedforward `r` solves `r' = (P_T B B^T - A^T) r + C^T z`, `r(T) = 0`.
/// Substituting the ansatz into the adjoint equation and cancelling with
/// the DRE leaves exactly this equation for `r`.
///
/// All three integrations use RK4. When the grid step exceeds the explicit
/// stability bound each interval is split into equal substeps, and `P_T`
/// and `r` between grid nodes come from cubic Hermite interpolation of the
/// nodal values and derivatives.
pub fn solve_riccati_sweep(prob: &LqProblem) -> Result<Trajectory> {
    let sys = &prob.sys;
    let h = prob.dt;
    let big_n = prob.steps;
    let g = sys.control_gram();
    let a_norm = linalg::max_singular_value(sys.a());
    let too_stiff = |stiffness: f64| (h * stiffness / RK4_STABILITY).ceil() as usize > MAX_SUBSTEPS;
    if too_stiff(a_norm) {
        return Err(Error::TooStiff {
            step: h,
            stiffness: a_norm,
        });
    }
    let dre = solve_dre(sys, prob.horizon, &prob.p0, big_n)?;
    let pmax = dre.p_samples.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let stiffness = a_norm + g.norm() * pmax;
    if too_stiff(stiffness) {
        return Err(Error::TooStiff { step: h, stiffness });
    }
    let sub = (h * stiffness / RK4_STABILITY).ceil().max(1.0) as usize;
    let hs = h / sub as f64;
    let frac = |j: usize| j as f64 / sub as f64;

    let field = DreField::new(sys);
    let ps = &dre.p_samples;
    let dps: Vec<DMatrix<f64>> = ps.iter().map(|p| -field.eval(p)).collect();
    // P_T(t) v with P_T interpolated inside interval i
    let p_apply = |i: usize, theta: f64, v: &DVector<f64>| {
        if theta == 0.0 {
            &ps[i] * v
        } else if theta == 1.0 {
            &ps[i + 1] * v
        } else {
            hermite(
                &(&ps[i] * v),
                &(&ps[i + 1] * v),
                &(&dps[i] * v),
                &(&dps[i + 1] * v),
                h,
                theta,
            )
        }
    };

    let at = sys.a().transpose();
    let cz = sys.c().transpose() * &prob.target;
    // Once the DRE has reached its fixed point P_T is constant on whole
    // intervals, and both closed-loop matrices can be formed once.
    let settled = &ps[0];
    let frozen: Vec<bool> = (0..big_n).map(|i| ps[i] == *settled && ps[i + 1] == *settled).collect();
    let back_frozen = &at - settled * &g;
    let fwd_frozen = sys.a() - &g * settled;
    // dr/ds = (A^T - P G) r - C^T z in reversed time
    let back = |i: usize, theta: f64, r: &DVector<f64>| {
        if frozen[i] {
            &back_frozen * r - &cz
        } else {
            &at * r - p_apply(i, theta, &(&g * r)) - &cz
        }
    };
    let n = sys.n();
    let mut r = vec![DVector::<f64>::zeros(n); big_n + 1];
    for i in (0..big_n).rev() {
        let mut rr = r[i + 1].clone();
        for j in (0..sub).rev() {
            let (hi, mid, lo) = (frac(j + 1), frac(j) + 0.5 / sub as f64, frac(j));
            let k1 = back(i, hi, &rr);
            let k2 = back(i, mid, &(&rr + &k1 * (hs / 2.0)));
            let k3 = back(i, mid, &(&rr + &k2 * (hs / 2.0)));
            let k4 = back(i, lo, &(&rr + &k3 * hs));
            rr += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hs / 6.0);
        }
        r[i] = rr;
    }
    let dr: Vec<DVector<f64>> = (0..=big_n)
        .map(|i| -(&at * &r[i] - &ps[i] * (&g * &r[i]) - &cz))
        .collect();
    let r_at = |i: usize, theta: f64| hermite(&r[i], &r[i + 1], &dr[i], &dr[i + 1], h, theta);

    let fwd = |i: usize, theta: f64, x: &DVector<f64>| {
        if frozen[i] {
            &fwd_frozen * x - &g * r_at(i, theta)
        } else {
            sys.a() * x - &g * (p_apply(i, theta, x) + r_at(i, theta))
        }
    };
    let mut xs = Vec::with_capacity(big_n + 1);
    xs.push(prob.x0.clone());
    for i in 0..big_n {
        let mut x = xs[i].clone();
        for j in 0..sub {
            let (lo, mid, hi) = (frac(j), frac(j) + 0.5 / sub as f64, frac(j + 1));
            let k1 = fwd(i, lo, &x);
            let k2 = fwd(i, mid, &(&x + &k1 * (hs / 2.0)));
            let k3 = fwd(i, mid, &(&x + &k2 * (hs / 2.0)));
            let k4 = fwd(i, hi, &(&x + &k3 * hs));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hs / 6.0);
        }
        let norm = x.norm();
        if !(norm <= 1e12) {
            return Err(Error::Divergence {
                t: (i + 1) as f64 * h,
                norm,
            });
        }
        xs.push(x);
    }
    let ys: Vec<DVector<f64>> = (0..=big_n).map(|i| &ps[i] * &xs[i] + &r[i]).collect();
    let bt = sys.b().transpose();
    let us = ys.iter().map(|y| -(&bt * y)).collect();
    Ok(Trajectory {
        grid: dre.grid,
        x: xs,
        y: ys,
        u: us,
        method: Method::RiccatiSweep,
    })
}

/// Nodal states and adjoints.
pub type StateAdjoint = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Forward state and backward adjoint driven by given nodal controls
/// (linearly interpolated), both by RK4.
pub fn adjoint_from_control(prob: &LqProblem, u: &[DVector<f64>]) -> Result<StateAdjoint> {
    let sys = &prob.sys;
    check_samples(prob, u, sys.m(), "controls")?;
    let h = prob.dt;
    check_explicit_step(sys.a(), h)?;
    let big_n = prob.steps;
    let a = sys.a();
    let b = sys.b();

    let mut xs = Vec::with_capacity(big_n + 1);
    xs.push(prob.x0.clone());
    for i in 0..big_n {
        let x = &xs[i];
        let bu0 = b * &u[i];
        let bu1 = b * &u[i + 1];
        let bum = (&bu0 + &bu1) * 0.5;
        let k1 = a * x + &bu0;
        let k2 = a * (x + &k1 * (h / 2.0)) + &bum;
        let k3 = a * (x + &k2 * (h / 2.0)) + &bum;
        let k4 = a * (x + &k3 * h) + &bu1;
        xs.push(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    }
    let dx: Vec<DVector<f64>> = (0..=big_n).map(|i| a * &xs[i] + b * &u[i]).collect();

    let at = a.transpose();
    let c = sys.c();
    let ct = c.transpose();
    let src = |x: &DVector<f64>| &ct * (c * x - &prob.target);
    let mut ys = vec![DVector::<f64>::zeros(sys.n()); big_n + 1];
    ys[big_n] = &prob.p0 * &xs[big_n];
    for i in (0..big_n).rev() {
        let xm = hermite(&xs[i], &xs[i + 1], &dx[i], &dx[i + 1], h, 0.5);
        let (s1, sm, s0) = (src(&xs[i + 1]), src(&xm), src(&xs[i]));
        let y1 = &ys[i + 1];
        // dy/ds = A^T y + C^T (Cx - z) in reversed time
        let k1 = &at * y1 + &s1;
        let k2 = &at * (y1 + &k1 * (h / 2.0)) + &sm;
        let k3 = &at * (y1 + &k2 * (h / 2.0)) + &sm;
        let k4 = &at * (y1 + &k3 * h) + &s0;
        ys[i] = y1 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok((xs, ys))
}

/// `J_T` of a trajectory: trapezoid quadrature of `|Cx - z|^2 + |u|^2`
/// plus `<P0 x(T), x(T)>`.
pub fn cost(prob: &LqProblem, traj: &Trajectory) -> Result<f64> {
    let grid = prob.grid();
    if traj.grid.len() != grid.len()
        || traj
            .grid
            .iter()
            .zip(&grid)
            .any(|(a, b)| (a - b).abs() > 1e-12 * prob.horizon)
    {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} nodes on [0, {}], problem grid has {} on [0, {}]",
            traj.grid.len(),
            traj.horizon(),
            grid.len(),
            prob.horizon
        )));
    }
    check_samples(prob, &traj.x, prob.sys.n(), "states")?;
    check_samples(prob, &traj.u, prob.sys.m(), "controls")?;
    let c = prob.sys.c();
    let running: f64 = prob
        .weights()
        .iter()
        .zip(traj.x.iter().zip(&traj.u))
        .map(|(w, (x, u))| w * ((c * x - &prob.target).norm_squared() + u.norm_squared()))
        .sum();
    let xt = traj.x.last().expect("nonempty");
    Ok(running + xt.dot(&(&prob.p0 * xt)))
}

/// Data of the forward system `y' = Ay + f + Bu + My`, `y(0) = y0`.
#[derive(Debug, Clone)]
pub struct ForwardData {
    pub y0: DVector<f64>,
    pub f: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub coupling: DMatrix<f64>,
}

/// Data of the backward system `z' = -A^T z - g`, `z(T) = z_T`.
#[derive(Debug, Clone)]
pub struct BackwardData {
    pub z_t: DVector<f64>,
    pub g: Vec<DVector<f64>>,
}

/// Defect of the integration-by-parts identity
/// `<y(T), z_T> - <y0, z(0)> = int <u, B^T z> - <y, g> + <f, z> + <My, z>`
/// after RK4 integration of both systems and trapezoid quadrature.
pub fn duality_residual(
    sys: &LtiSystem,
    forward: &ForwardData,
    backward: &BackwardData,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let n = sys.n();
    let steps = (horizon / dt).round();
    if !(horizon > 0.0) || !(dt > 0.0) || steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide T = {horizon}"
        )));
    }
    let big_n = steps as usize;
    let nodes = big_n + 1;
    let sized = |v: &[DVector<f64>], dim: usize| v.len() == nodes && v.iter().all(|s| s.len() == dim);
    if !sized(&forward.f, n) || !sized(&forward.u, sys.m()) || !sized(&backward.g, n) {
        return Err(Error::GridMismatch(format!("forcing data must have {nodes} samples")));
    }
    if forward.y0.len() != n || backward.z_t.len() != n || forward.coupling.shape() != (n, n) {
        return Err(Error::DimensionMismatch("duality data dimensions".into()));
    }
    let h = dt;
    let am = sys.a() + &forward.coupling;
    check_explicit_step(&am, h)?;
    check_explicit_step(sys.a(), h)?;
    let b = sys.b();
    let src = |i: usize| &forward.f[i] + b * &forward.u[i];

    let mut ys = Vec::with_capacity(nodes);
    ys.push(forward.y0.clone());
    for i in 0..big_n {
        let (s0, s1) = (src(i), src(i + 1));
        let sm = (&s0 + &s1) * 0.5;
        let y = &ys[i];
        let k1 = &am * y + &s0;
        let k2 = &am * (y + &k1 * (h / 2.0)) + &sm;
        let k3 = &am * (y + &k2 * (h / 2.0)) + &sm;
        let k4 = &am * (y + &k3 * h) + &s1;
        ys.push(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    }
    let at = sys.a().transpose();
    let mut zs = vec![DVector::<f64>::zeros(n); nodes];
    zs[big_n] = backward.z_t.clone();
    for i in (0..big_n).rev() {
        let (g1, g0) = (&backward.g[i + 1], &backward.g[i]);
        let gm = (g0 + g1) * 0.5;
        let z = &zs[i + 1];
        // dz/ds = A^T z + g in reversed time
        let k1 = &at * z + g1;
        let k2 = &at * (z + &k1 * (h / 2.0)) + &gm;
        let k3 = &at * (z + &k2 * (h / 2.0)) + &gm;
        let k4 = &at * (z + &k3 * h) + g0;
        zs[i] = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let bt = b.transpose();
    let mut integral = 0.0;
    for i in 0..nodes {
        let w = if i == 0 || i == big_n { 0.5 * h } else { h };
        let (y, z) = (&ys[i], &zs[i]);
        integral += w
            * (forward.u[i].dot(&(&bt * z)) - y.dot(&backward.g[i])
                + forward.f[i].dot(z)
                + (&forward.coupling * y).dot(z));
    }
    let lhs = ys[big_n].dot(&backward.z_t) - forward.y0.dot(&zs[0]);
    Ok((lhs - integral).abs())
}

/// Optimal infinite-horizon feedback `u = -B^T P x` integrated by RK4 on
/// `[0, horizon]`, with `y = P x`.
pub fn solve_infinite_horizon(sys: &LtiSystem, x0: &DVector<f64>, horizon: f64, dt: f64) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            sys.n()
        )));
    }
    let steps = (horizon / dt).round();
    if !(horizon > 0.0) || !(dt > 0.0) || steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide T = {horizon}"
        )));
    }
    let are = solve_are(sys)?;
    let (gen, _) = riccati::closed_loop_generator(sys, &are);
    check_explicit_step(&gen, dt)?;
    let big_n = steps as usize;
    let mut xs = Vec::with_capacity(big_n + 1);
    xs.push(x0.clone());
    for i in 0..big_n {
        let next = rk4_linear(&gen, &xs[i], dt);
        xs.push(next);
    }
    let ys: Vec<DVector<f64>> = xs.iter().map(|x| &are.p * x).collect();
    let bt = sys.b().transpose();
    let us = ys.iter().map(|y| -(&bt * y)).collect();
    Ok(Trajectory {
        grid: riccati::uniform_grid(horizon, big_n),
        x: xs,
        y: ys,
        u: us,
        method: Method::ClosedLoop,
    })
}
