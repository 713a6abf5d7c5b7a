//! The system triple `(A, B, C)` on `R^n x R^m`, its semigroup, the Yosida
//! approximation of the control operator and the structural checks needed
//! before a turnpike statement is meaningful.
//!
//! Admissibility of `B` is automatic for matrices, so no admissibility
//! constant is carried around.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance for rank and eigenvalue decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Default number of trapezoid panels for Gramian quadrature.
pub const DEFAULT_GRAMIAN_STEPS: usize = 2048;
/// Default observability horizon when a scenario does not declare one.
pub const DEFAULT_T0: f64 = 1.0;

/// Linear time-invariant system `x' = Ax + Bu` observed through `C`.
///
/// `C` is square, matching an observation operator on the state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C must be {n}x{n}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if !linalg::all_finite(m) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Control dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `B B^T`.
    pub fn control_gram(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }

    /// `C^T C`.
    pub fn observation_gram(&self) -> DMatrix<f64> {
        self.c.transpose() * &self.c
    }

    /// Same `A` and `C` with a different control operator.
    pub fn with_control(&self, b: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), b, self.c.clone())
    }
}

/// Constructs a validated system.
pub fn make_system(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<LtiSystem> {
    LtiSystem::new(a, b, c)
}

/// Matrix exponential by scaling and squaring with a Pade approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// `e^{tA}`.
pub fn semigroup(sys: &LtiSystem, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "semigroup time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(expm(&(sys.a() * t)))
}

/// Yosida approximation of the identity, `J_k = k (kI - A)^{-1}`.
pub fn yosida(sys: &LtiSystem, k: f64) -> Result<DMatrix<f64>> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Yosida parameter must be positive and finite, got {k}"
        )));
    }
    let abscissa = linalg::spectral_abscissa(sys.a());
    if k <= abscissa {
        return Err(Error::InvalidYosidaParameter { k, abscissa });
    }
    let n = sys.n();
    let shifted = DMatrix::identity(n, n) * k - sys.a();
    let j = shifted
        .lu()
        .solve(&(DMatrix::identity(n, n) * k))
        .ok_or(Error::InvalidYosidaParameter { k, abscissa })?;
    if !linalg::all_finite(&j) {
        return Err(Error::InvalidYosidaParameter { k, abscissa });
    }
    Ok(j)
}

/// Bounded approximation `B_k = J_k B` of the control operator.
pub fn approx_control_operator(sys: &LtiSystem, k: f64) -> Result<DMatrix<f64>> {
    Ok(yosida(sys, k)? * sys.b())
}

/// Gramian `int_0^{t0} e^{tM^T} N^T N e^{tM} dt` by the composite trapezoid
/// rule on `steps` uniform panels.
///
/// `(M, N) = (A, C)` gives the observability Gramian of `(A, C)`;
/// `(M, N) = (A^T, B^T)` the one of `(A^*, B^*)`.
pub fn observability_gramian(m: &DMatrix<f64>, obs: &DMatrix<f64>, t0: f64, steps: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || obs.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Gramian pair needs M n x n and N p x n, got {}x{} and {}x{}",
            m.nrows(),
            m.ncols(),
            obs.nrows(),
            obs.ncols()
        )));
    }
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Gramian horizon must be positive, got {t0}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "Gramian quadrature needs at least 2 steps, got {steps}"
        )));
    }
    let h = t0 / steps as f64;
    let step = expm(&(m * h));
    let mut flow = DMatrix::<f64>::identity(n, n);
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for j in 0..=steps {
        let w = if j == 0 || j == steps { 0.5 * h } else { h };
        let observed = obs * &flow;
        gram += observed.transpose() * &observed * w;
        if j < steps {
            flow = &step * flow;
        }
    }
    Ok(linalg::symmetrize(&gram))
}

/// Outcome of the structural checks on `(A, B, C)`.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    /// Smallest eigenvalue of the `(A, C)` observability Gramian over `[0, t0]`.
    pub obs_ac: f64,
    /// Smallest eigenvalue of the `(A^*, B^*)` Gramian over `[0, t0]`.
    pub obs_astar_bstar: f64,
    /// `ker A ∩ ker C = {0}`: `[A; C]` has full column rank.
    pub ker_ac_trivial: bool,
    /// `ker A^* ∩ ker B^* = {0}`: `[A^T; B^T]` has full column rank.
    pub ker_astar_bstar_trivial: bool,
    /// Hautus test for `(A, C)`: `[A - sI; C]` has full rank at every eigenvalue `s`.
    pub pbh_ac: bool,
    /// Hautus test for `(A^*, B^*)`.
    pub pbh_astar_bstar: bool,
    /// Coercivity constant of `C^T C`, i.e. the squared smallest singular value of `C`.
    pub delta: f64,
    pub t0: f64,
    pub rank_tol: f64,
}

impl HypothesisReport {
    /// Both observability and kernel conditions plus `C^T C >= delta > 0`.
    ///
    /// Observability is decided by the Hautus test; the Gramian eigenvalues
    /// are reported as quantitative margins only because they underflow for
    /// parabolic systems that are observable in exact arithmetic.
    pub fn satisfied(&self) -> bool {
        self.stationary_ok() && self.delta > self.rank_tol
    }

    /// Conditions under which the stationary triple exists and is unique.
    pub fn stationary_ok(&self) -> bool {
        self.ker_ac_trivial && self.ker_astar_bstar_trivial && self.pbh_ac && self.pbh_astar_bstar
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.ker_ac_trivial {
            out.push("ker A ∩ ker C is nontrivial");
        }
        if !self.ker_astar_bstar_trivial {
            out.push("ker A* ∩ ker B* is nontrivial");
        }
        if !self.pbh_ac {
            out.push("(A, C) is not observable");
        }
        if !self.pbh_astar_bstar {
            out.push("(A*, B*) is not observable");
        }
        if !(self.delta > self.rank_tol) {
            out.push("C*C is not coercive");
        }
        out
    }
}

fn stacked(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let n = top.ncols();
    let mut s = DMatrix::zeros(top.nrows() + bottom.nrows(), n);
    s.view_mut((0, 0), top.shape()).copy_from(top);
    s.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    s
}

fn hautus(m: &DMatrix<f64>, obs: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    let scale = linalg::max_singular_value(&stacked(m, obs)).max(f64::MIN_POSITIVE);
    let obs_c = linalg::to_complex(obs);
    linalg::eigenvalues(m).into_iter().all(|s| {
        let mut shifted = linalg::to_complex(m);
        for i in 0..n {
            shifted[(i, i)] -= s;
        }
        let mut st = DMatrix::<Complex<f64>>::zeros(n + obs.nrows(), n);
        st.view_mut((0, 0), (n, n)).copy_from(&shifted);
        st.view_mut((n, 0), obs_c.shape()).copy_from(&obs_c);
        let sv = st.svd(false, false).singular_values;
        sv.min() > tol * scale
    })
}

/// Structural checks of the turnpike theorem on `(A, B, C)`.
pub fn check_hypotheses(sys: &LtiSystem, t0: f64, tol: f64) -> Result<HypothesisReport> {
    let n = sys.n();
    let at = sys.a().transpose();
    let bt = sys.b().transpose();
    let g_ac = observability_gramian(sys.a(), sys.c(), t0, DEFAULT_GRAMIAN_STEPS)?;
    let g_ab = observability_gramian(&at, &bt, t0, DEFAULT_GRAMIAN_STEPS)?;
    let smin_c = linalg::min_singular_value(sys.c());
    Ok(HypothesisReport {
        obs_ac: linalg::min_sym_eigenvalue(&g_ac),
        obs_astar_bstar: linalg::min_sym_eigenvalue(&g_ab),
        ker_ac_trivial: linalg::rank(&stacked(sys.a(), sys.c()), tol) == n,
        ker_astar_bstar_trivial: linalg::rank(&stacked(&at, &bt), tol) == n,
        pbh_ac: hautus(sys.a(), sys.c(), tol),
        pbh_astar_bstar: hautus(&at, &bt, tol),
        delta: smin_c * smin_c,
        t0,
        rank_tol: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64) -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
        )
        .unwrap()
    }

    /// Truncated Taylor series, independent of the Pade path.
    fn series_exp(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn make_system_accepts_scalar_and_rejects_mismatch() {
        let s = scalar(-1.0, 1.0, 1.0);
        assert_eq!((s.n(), s.m()), (1, 1));

        let ok = make_system(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::identity(2, 2));
        assert!(ok.is_ok());

        let bad = make_system(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::identity(2, 2));
        assert!(matches!(bad, Err(Error::DimensionMismatch(_))));

        let nan = make_system(
            DMatrix::from_element(1, 1, f64::NAN),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        );
        assert!(matches!(nan, Err(Error::NonFinite(_))));
    }

    #[test]
    fn semigroup_values() {
        let s = scalar(-1.0, 1.0, 1.0);
        assert_eq!(semigroup(&s, 0.0).unwrap()[(0, 0)], 1.0);
        assert!((semigroup(&s, 1.0).unwrap()[(0, 0)] - (-1.0f64).exp()).abs() < 1e-9);
        assert!(semigroup(&s, -1.0).is_err());

        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let sys = LtiSystem::new(nil.clone(), DMatrix::zeros(2, 1), DMatrix::identity(2, 2)).unwrap();
        let e = semigroup(&sys, 1.0).unwrap();
        let oracle = series_exp(&nil, 5);
        assert!((&e - &oracle).norm() < 1e-14);
        assert!((e - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn expm_matches_series_on_small_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[-0.3, 0.2, 0.1, 0.0, -0.5, 0.4, 0.2, -0.1, -0.2]);
        assert!((expm(&m) - series_exp(&m, 30)).norm() < 1e-14);
    }

    #[test]
    fn yosida_scalar_and_zero_generator() {
        let s = scalar(-1.0, 1.0, 1.0);
        assert!((yosida(&s, 1.0).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((yosida(&s, 1000.0).unwrap()[(0, 0)] - 1000.0 / 1001.0).abs() < 1e-12);

        let z = LtiSystem::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 1), DMatrix::identity(3, 3)).unwrap();
        for k in [0.5, 3.0, 1e4] {
            assert!((yosida(&z, k).unwrap() - DMatrix::identity(3, 3)).norm() < 1e-14);
        }
    }

    #[test]
    fn yosida_rejects_k_below_abscissa() {
        let s = scalar(2.0, 1.0, 1.0);
        assert!(matches!(yosida(&s, 1.0), Err(Error::InvalidYosidaParameter { .. })));
        assert!(matches!(yosida(&s, 2.0), Err(Error::InvalidYosidaParameter { .. })));
        assert!(yosida(&s, 0.0).is_err());
    }

    #[test]
    fn approx_control_operator_values() {
        let s = scalar(-1.0, 1.0, 1.0);
        assert!((approx_control_operator(&s, 1.0).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in [10.0, 100.0, 1000.0] {
            let bk = approx_control_operator(&s, k).unwrap()[(0, 0)];
            assert!(bk > prev && bk < 1.0);
            prev = bk;
        }
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -2.0]);
        let z = LtiSystem::new(DMatrix::zeros(2, 2), b.clone(), DMatrix::identity(2, 2)).unwrap();
        assert!((approx_control_operator(&z, 7.0).unwrap() - b).norm() < 1e-15);
    }

    #[test]
    fn gramian_closed_forms() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let g0 = observability_gramian(&DMatrix::zeros(1, 1), &one, 1.0, 2048).unwrap();
        assert!((g0[(0, 0)] - 1.0).abs() < 1e-10);

        let g1 = observability_gramian(&DMatrix::from_element(1, 1, -1.0), &one, 1.0, 4096).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((g1[(0, 0)] - exact).abs() < 1e-8);
        assert!((exact - 0.4323323584).abs() < 1e-10);

        let gz = observability_gramian(&DMatrix::from_element(1, 1, -1.0), &DMatrix::zeros(1, 1), 1.0, 16).unwrap();
        assert_eq!(gz[(0, 0)], 0.0);

        assert!(observability_gramian(&one, &one, 1.0, 1).is_err());
        assert!(observability_gramian(&one, &one, 0.0, 8).is_err());
    }

    #[test]
    fn hypotheses_scalar_all_pass() {
        let r = check_hypotheses(&scalar(-1.0, 1.0, 1.0), 1.0, DEFAULT_RANK_TOL).unwrap();
        assert!(r.ker_ac_trivial && r.ker_astar_bstar_trivial && r.pbh_ac && r.pbh_astar_bstar);
        assert!(r.obs_ac > 0.0 && r.obs_astar_bstar > 0.0);
        assert!((r.delta - 1.0).abs() < 1e-14);
        assert!(r.satisfied());
    }

    #[test]
    fn hypotheses_detect_shared_kernel_and_scaled_c() {
        let r = check_hypotheses(&scalar(0.0, 1.0, 0.0), 1.0, DEFAULT_RANK_TOL).unwrap();
        assert!(!r.ker_ac_trivial);
        assert!(!r.satisfied());

        let sys = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::identity(2, 2) * 2.0,
        )
        .unwrap();
        let r = check_hypotheses(&sys, 1.0, DEFAULT_RANK_TOL).unwrap();
        assert!((r.delta - 4.0).abs() < 1e-12);
    }
}
