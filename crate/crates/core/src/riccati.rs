//! Algebraic and differential Riccati equations
//! `A^T P + P A + C^T C - P B B^T P = 0` and
//! `P' + A^T P + P A + C^T C - P B B^T P = 0`, `P(T) = P0`,
//! together with the closed-loop generator `A - B B^T P`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::csv::{num, Table};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::operators::{expm, LtiSystem};

/// Tolerance on the relative ARE residual after refinement.
pub const ARE_TOL: f64 = 1e-10;
const NEWTON_STEPS: usize = 5;
/// Stability bound used to size explicit Runge-Kutta steps.
pub(crate) const RK4_STABILITY: f64 = 2.5;
const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, Serialize)]
pub struct AreSolution {
    pub p: DMatrix<f64>,
    /// Relative residual `|R|_F / (|Q| + 2|A||P| + |G||P|^2)`.
    pub residual: f64,
    /// Largest real part of the spectrum of `A - B B^T P`.
    pub closed_loop_abscissa: f64,
}

impl AreSolution {
    /// Decay rate of the closed-loop semigroup.
    pub fn lambda(&self) -> f64 {
        -self.closed_loop_abscissa
    }
}

/// Relative Frobenius residual of the ARE at `p`.
pub fn are_residual(sys: &LtiSystem, p: &DMatrix<f64>) -> f64 {
    let q = sys.observation_gram();
    let g = sys.control_gram();
    let r = sys.a().transpose() * p + p * sys.a() + &q - p * &g * p;
    let pn = p.norm();
    let scale = q.norm() + 2.0 * sys.a().norm() * pn + g.norm() * pn * pn;
    if scale == 0.0 {
        0.0
    } else {
        r.norm() / scale
    }
}

fn hamiltonian(sys: &LtiSystem) -> DMatrix<f64> {
    let n = sys.n();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(sys.a());
    h.view_mut((0, n), (n, n)).copy_from(&(-sys.control_gram()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-sys.observation_gram()));
    h.view_mut((n, n), (n, n)).copy_from(&(-sys.a().transpose()));
    h
}

fn stable_subspace_solution(sys: &LtiSystem) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let h = hamiltonian(sys);
    let scale = h.norm().max(1.0);
    let (mut q, mut t) = linalg::complex_schur(&h);
    let found = linalg::reorder_schur(&mut q, &mut t, |z| z.re < -1e-12 * scale);
    if found != n {
        return Err(Error::NotStabilizable { found, needed: n });
    }
    let u1: CMatrix = q.view((0, 0), (n, n)).into_owned();
    let u2: CMatrix = q.view((n, 0), (n, n)).into_owned();
    let sv = u1.clone().svd(false, false).singular_values;
    // The columns of [U1; U2] are orthonormal, so an absolute floor suffices.
    if sv.min() <= 1e-12 {
        return Err(Error::NotStabilizable { found, needed: n });
    }
    // P = U2 U1^{-1}, i.e. P^T solves U1^T P^T = U2^T.
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or(Error::NotStabilizable { found, needed: n })?;
    Ok(linalg::symmetrize(&pt.transpose().map(|z: Complex<f64>| z.re)))
}

/// Stabilizing solution from the stable invariant subspace of the
/// Hamiltonian `[[A, -BB^T], [-C^T C, -A^T]]`, polished by Newton-Kleinman.
pub fn solve_are(sys: &LtiSystem) -> Result<AreSolution> {
    let mut p = stable_subspace_solution(sys)?;
    let mut res = are_residual(sys, &p);
    let g = sys.control_gram();
    let q = sys.observation_gram();
    for _ in 0..NEWTON_STEPS {
        if res <= 1e-15 {
            break;
        }
        let closed = sys.a() - &g * &p;
        let w = &q + &p * &g * &p;
        let Ok(next) = linalg::solve_lyapunov(&closed, &w) else {
            break;
        };
        let next_res = are_residual(sys, &next);
        if !(next_res < res) {
            break;
        }
        p = next;
        res = next_res;
    }
    if !(res <= ARE_TOL) {
        return Err(Error::RiccatiConvergence { residual: res });
    }
    let abscissa = linalg::spectral_abscissa(&(sys.a() - &g * &p));
    if !(abscissa < 0.0) {
        return Err(Error::NotStabilizable {
            found: 0,
            needed: sys.n(),
        });
    }
    Ok(AreSolution {
        p,
        residual: res,
        closed_loop_abscissa: abscissa,
    })
}

/// Closed-loop generator `A - B B^T P` and its decay rate
/// `lambda = -abscissa`. A nonpositive rate means the feedback does not
/// stabilize and the turnpike estimate is void; callers decide how to react.
pub fn closed_loop_generator(sys: &LtiSystem, are: &AreSolution) -> (DMatrix<f64>, f64) {
    let gen = sys.a() - sys.control_gram() * &are.p;
    let lambda = -linalg::spectral_abscissa(&gen);
    (gen, lambda)
}

/// Samples of `P_T` on a uniform grid of `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct DreSolution {
    pub grid: Vec<f64>,
    pub p_samples: Vec<DMatrix<f64>>,
    pub p0: DMatrix<f64>,
}

impl DreSolution {
    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["t", "i", "j", "value"]);
        for (time, p) in self.grid.iter().zip(&self.p_samples) {
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    t.row(&[num(*time), i.to_string(), j.to_string(), num(p[(i, j)])]);
                }
            }
        }
        t.finish()
    }
}

/// Right-hand side of the DRE in reversed time `s = T - t`.
pub(crate) struct DreField {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    a_norm: f64,
    g_norm: f64,
    q: DMatrix<f64>,
}

impl DreField {
    pub(crate) fn new(sys: &LtiSystem) -> Self {
        Self {
            a: sys.a().clone(),
            b: sys.b().clone(),
            a_norm: linalg::max_singular_value(sys.a()),
            g_norm: linalg::max_singular_value(sys.b()).powi(2),
            q: sys.observation_gram(),
        }
    }

    /// `dP/ds = A^T P + P A + Q - P G P`.
    pub(crate) fn eval(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let pa = p * &self.a;
        let pb = p * &self.b;
        pa.transpose() + pa + &self.q - &pb * pb.transpose()
    }

    fn rk4(&self, p: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let k1 = self.eval(p);
        let k2 = self.eval(&(p + &k1 * (h / 2.0)));
        let k3 = self.eval(&(p + &k2 * (h / 2.0)));
        let k4 = self.eval(&(p + &k3 * h));
        linalg::symmetrize(&(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
    }

    /// Upper bound on the spectral radius of the linearized field near `p`.
    fn stiffness(&self, p: &DMatrix<f64>) -> f64 {
        2.0 * (self.a_norm + self.g_norm * p.norm())
    }
}

fn check_symmetric_psd(p: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = p.norm();
    if (p - p.transpose()).norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    if scale > 0.0 && linalg::min_sym_eigenvalue(p) < -1e-10 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// Integrates the DRE backward from `P_T(T) = p0` with classical RK4 on
/// `steps` uniform intervals, symmetrizing after every step. Intervals are
/// subdivided when the field is too stiff for a single explicit step.
pub fn solve_dre(sys: &LtiSystem, horizon: f64, p0: &DMatrix<f64>, steps: usize) -> Result<DreSolution> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "DRE needs at least 2 steps, got {steps}"
        )));
    }
    let n = sys.n();
    if p0.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "terminal matrix must be {n}x{n}, got {}x{}",
            p0.nrows(),
            p0.ncols()
        )));
    }
    if !linalg::all_finite(p0) {
        return Err(Error::NonFinite("terminal matrix".into()));
    }
    check_symmetric_psd(p0, "terminal matrix")?;

    let field = DreField::new(sys);
    let h = horizon / steps as f64;
    let mut samples = vec![DMatrix::zeros(n, n); steps + 1];
    samples[steps] = p0.clone();
    let mut p = p0.clone();
    for i in (0..steps).rev() {
        let sub = ((h * field.stiffness(&p)) / RK4_STABILITY).ceil().max(1.0) as usize;
        let hs = h / sub as f64;
        for _ in 0..sub {
            p = field.rk4(&p, hs);
        }
        let norm = p.norm();
        if !(norm <= BLOWUP) {
            return Err(Error::Divergence { t: i as f64 * h, norm });
        }
        samples[i] = p.clone();
        if samples[i] == samples[i + 1] {
            // The step map is deterministic and autonomous: a sample it
            // leaves unchanged repeats at every earlier node.
            for earlier in &mut samples[..i] {
                earlier.copy_from(&p);
            }
            break;
        }
    }
    Ok(DreSolution {
        grid: uniform_grid(horizon, steps),
        p_samples: samples,
        p0: p0.clone(),
    })
}

pub(crate) fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect()
}

/// Returns `(<P xi, xi>, cost)` where `cost` is the running cost
/// `int_0^horizon |Cx|^2 + |u|^2` of the optimal feedback `u = -B^T P x`,
/// integrated by RK4 and Simpson's rule.
pub fn value_function_check(
    sys: &LtiSystem,
    are: &AreSolution,
    xi: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    if xi.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            xi.len(),
            sys.n()
        )));
    }
    if !(horizon > 0.0) || !(dt > 0.0) || dt > horizon {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let (gen, _) = closed_loop_generator(sys, are);
    let tail = expm(&(&gen * horizon)).norm();
    if tail > 1e-6 {
        return Err(Error::HorizonTooShort { horizon, tail });
    }
    let mut steps = (horizon / dt).round().max(2.0) as usize;
    steps += steps % 2;
    let h = horizon / steps as f64;
    check_explicit_step(&gen, h)?;

    let gain = sys.b().transpose() * &are.p;
    let running = |x: &DVector<f64>| (sys.c() * x).norm_squared() + (&gain * x).norm_squared();
    let mut x = xi.clone();
    let mut acc = running(&x);
    for i in 1..=steps {
        x = rk4_linear(&gen, &x, h);
        let w = if i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * running(&x);
    }
    Ok((xi.dot(&(&are.p * xi)), acc * h / 3.0))
}

/// One RK4 step of `x' = M x`.
pub(crate) fn rk4_linear(m: &DMatrix<f64>, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = m * x;
    let k2 = m * (x + &k1 * (h / 2.0));
    let k3 = m * (x + &k2 * (h / 2.0));
    let k4 = m * (x + &k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Rejects explicit RK4 steps outside the stability region.
pub(crate) fn check_explicit_step(m: &DMatrix<f64>, h: f64) -> Result<()> {
    let radius = linalg::eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if h * radius > RK4_STABILITY {
        return Err(Error::TooStiff {
            step: h,
            stiffness: radius,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(a: f64, b: f64, c: f64) -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
        )
        .unwrap()
    }

    fn four_state() -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    -1.2, 0.4, 0.0, 0.3, //
                    0.1, -0.8, 0.5, 0.0, //
                    0.0, -0.3, -1.5, 0.2, //
                    0.4, 0.0, 0.1, -0.9,
                ],
            ),
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.5, 0.2, 0.0, 1.0, -0.3, 0.4]),
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.1, 0.0, 0.0, //
                    0.0, 0.8, 0.2, 0.0, //
                    0.0, 0.0, 1.1, -0.1, //
                    0.1, 0.0, 0.0, 0.6,
                ],
            ),
        )
        .unwrap()
    }

    #[test]
    fn scalar_are() {
        let s = solve_are(&sys(-1.0, 1.0, 1.0)).unwrap();
        let root = 2f64.sqrt() - 1.0;
        assert!((s.p[(0, 0)] - root).abs() < 1e-10);
        assert!((s.closed_loop_abscissa + 2f64.sqrt()).abs() < 1e-10);
        assert!(s.residual <= ARE_TOL);

        let (gen, lambda) = closed_loop_generator(&sys(-1.0, 1.0, 1.0), &s);
        assert!((gen[(0, 0)] + 2f64.sqrt()).abs() < 1e-10);
        assert!((lambda - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn degenerate_are_cases() {
        let s = solve_are(&sys(-1.0, 1.0, 0.0)).unwrap();
        assert!(s.p[(0, 0)].abs() < 1e-14);
        let (_, lambda) = closed_loop_generator(&sys(-1.0, 1.0, 0.0), &s);
        assert!((lambda - 1.0).abs() < 1e-12);

        let s = solve_are(&sys(-1.0, 0.0, 1.0)).unwrap();
        assert!((s.p[(0, 0)] - 0.5).abs() < 1e-12);

        assert!(matches!(
            solve_are(&sys(1.0, 0.0, 1.0)),
            Err(Error::NotStabilizable { .. })
        ));
    }

    #[test]
    fn four_state_are_invariants() {
        let s = four_state();
        let are = solve_are(&s).unwrap();
        assert!(are.residual <= ARE_TOL);
        assert!((&are.p - are.p.transpose()).norm() <= 1e-12 * are.p.norm());
        assert!(linalg::min_sym_eigenvalue(&are.p) >= -1e-10 * are.p.norm());
        assert!(are.closed_loop_abscissa < 0.0);
    }

    #[test]
    fn dre_at_are_solution_is_constant() {
        let s = four_state();
        let are = solve_are(&s).unwrap();
        let dre = solve_dre(&s, 5.0, &are.p, 500).unwrap();
        let dev = dre.p_samples.iter().map(|p| (p - &are.p).norm()).fold(0.0, f64::max);
        assert!(dev <= 1e-8, "deviation {dev}");
        assert_eq!(dre.p_samples.last().unwrap(), &are.p);
    }

    #[test]
    fn dre_long_horizon_approaches_are() {
        let s = sys(-1.0, 1.0, 1.0);
        let dre = solve_dre(&s, 10.0, &DMatrix::zeros(1, 1), 10_000).unwrap();
        assert!((dre.p_samples[0][(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-6);

        let zero = solve_dre(&sys(-1.0, 1.0, 0.0), 3.0, &DMatrix::zeros(1, 1), 30).unwrap();
        assert!(zero.p_samples.iter().all(|p| p[(0, 0)] == 0.0));
    }

    /// Scalar DRE with p0 = 0 has the closed form
    /// `p(s) = (e^{2 r s} - 1) / ((r + 1) e^{2 r s} + r - 1)`, `r = sqrt 2`,
    /// in reversed time `s = T - t` (obtained by separation of variables).
    fn scalar_dre_exact(s: f64) -> f64 {
        let r = 2f64.sqrt();
        let e = (2.0 * r * s).exp();
        (e - 1.0) / ((r + 1.0) * e + r - 1.0)
    }

    #[test]
    fn dre_is_fourth_order() {
        let s = sys(-1.0, 1.0, 1.0);
        let err = |steps: usize| {
            let dre = solve_dre(&s, 2.0, &DMatrix::zeros(1, 1), steps).unwrap();
            dre.grid
                .iter()
                .zip(&dre.p_samples)
                .map(|(t, p)| (p[(0, 0)] - scalar_dre_exact(2.0 - t)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(20), err(40));
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn dre_value_is_monotone_in_horizon() {
        let s = four_state();
        let xi = DVector::from_vec(vec![0.3, -1.0, 0.5, 0.2]);
        let mut prev = 0.0;
        for horizon in [0.5, 1.0, 2.0, 4.0] {
            let dre = solve_dre(&s, horizon, &DMatrix::zeros(4, 4), (horizon * 200.0) as usize).unwrap();
            let v = xi.dot(&(&dre.p_samples[0] * &xi));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn dre_rejects_bad_terminal_matrix() {
        let s = sys(-1.0, 1.0, 1.0);
        assert!(solve_dre(&s, 1.0, &DMatrix::from_element(1, 1, -1.0), 10).is_err());
        assert!(solve_dre(&s, 1.0, &DMatrix::zeros(2, 2), 10).is_err());
        assert!(solve_dre(&s, 1.0, &DMatrix::zeros(1, 1), 1).is_err());
    }

    #[test]
    fn value_function_matches_quadratic_form() {
        let s = sys(-1.0, 1.0, 1.0);
        let are = solve_are(&s).unwrap();
        let (q, c) = value_function_check(&s, &are, &DVector::from_element(1, 1.0), 20.0, 1e-3).unwrap();
        assert!((q - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        // closed-form running cost of x = e^{-sqrt2 t}: (1 + P^2) / (2 sqrt2)
        let p = 2f64.sqrt() - 1.0;
        assert!((c - (1.0 + p * p) / (2.0 * 2f64.sqrt())).abs() < 1e-6);
        assert!((c - q).abs() < 1e-6);

        let (q2, c2) = value_function_check(&s, &are, &DVector::from_element(1, 2.0), 20.0, 1e-3).unwrap();
        assert!((q2 - 4.0 * q).abs() < 1e-12 && (c2 - 4.0 * c).abs() < 1e-10);

        let (q0, c0) = value_function_check(&s, &are, &DVector::zeros(1), 20.0, 1e-3).unwrap();
        assert_eq!((q0, c0), (0.0, 0.0));

        assert!(matches!(
            value_function_check(&s, &are, &DVector::from_element(1, 1.0), 1.0, 1e-3),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn closed_loop_rate_matches_norm_decay() {
        let s = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -5.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let are = solve_are(&s).unwrap();
        let (gen, lambda) = closed_loop_generator(&s, &are);
        // log-linear least squares of |e^{tM}| over t in [1, 5]
        let ts: Vec<f64> = (0..=40).map(|i| 1.0 + 0.1 * i as f64).collect();
        let ls: Vec<f64> = ts.iter().map(|t| expm(&(&gen * *t)).norm().ln()).collect();
        let tm = ts.iter().sum::<f64>() / ts.len() as f64;
        let lm = ls.iter().sum::<f64>() / ls.len() as f64;
        let slope = ts.iter().zip(&ls).map(|(t, l)| (t - tm) * (l - lm)).sum::<f64>()
            / ts.iter().map(|t| (t - tm).powi(2)).sum::<f64>();
        assert!((-slope - lambda).abs() <= 0.02 * lambda, "fit {} vs {lambda}", -slope);
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let s = sys(-1.0, 1.0, 1.0);
        let dre = solve_dre(&s, 1.0, &DMatrix::zeros(1, 1), 4).unwrap();
        let csv = dre.to_csv();
        assert!(csv.starts_with("t,i,j,value\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
