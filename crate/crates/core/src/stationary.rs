//! The stationary problem `min |Cx - z|^2 + |u|^2` subject to `Ax + Bu = 0`
//! and its variants with a Yosida-smoothed control operator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::csv::{num, Table};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{approx_control_operator, LtiSystem, DEFAULT_RANK_TOL};

/// Optimal steady state, control and multiplier, with the residuals of the
/// three optimality equations.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryTriple {
    pub x_bar: DVector<f64>,
    pub u_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    /// `|A x + B u|`
    pub residual_constraint: f64,
    /// `|A^T y + C^T (C x - z)|`
    pub residual_adjoint: f64,
    /// `|u + B^T y|`
    pub residual_control: f64,
}

impl StationaryTriple {
    pub fn max_residual(&self) -> f64 {
        self.residual_constraint
            .max(self.residual_adjoint)
            .max(self.residual_control)
    }

    /// Largest residual divided by the size of the data it was computed from.
    pub fn relative_residual(&self, sys: &LtiSystem, z: &DVector<f64>) -> f64 {
        let scale = 1.0
            + sys.a().norm() * (self.x_bar.norm() + self.y_bar.norm())
            + sys.b().norm() * (self.u_bar.norm() + self.y_bar.norm())
            + sys.c().norm() * (sys.c().norm() * self.x_bar.norm() + z.norm());
        self.max_residual() / scale
    }
}

fn solve_kkt(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, z: &DVector<f64>) -> Result<StationaryTriple> {
    let n = a.nrows();
    let m = b.ncols();
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "target has length {}, state dimension is {n}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target".into()));
    }
    let dim = 2 * n + m;
    let q = c.transpose() * c;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(a);
    k.view_mut((0, n), (n, m)).copy_from(b);
    k.view_mut((n, 0), (n, n)).copy_from(&q);
    k.view_mut((n, n + m), (n, n)).copy_from(&a.transpose());
    k.view_mut((2 * n, n), (m, m)).fill_with_identity();
    k.view_mut((2 * n, n + m), (m, n)).copy_from(&b.transpose());

    let rank = linalg::rank(&k, DEFAULT_RANK_TOL);
    if rank < dim {
        return Err(Error::UniquenessFailure { rank, dim });
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.rows_mut(n, n).copy_from(&(c.transpose() * z));
    let sol = k.lu().solve(&rhs).ok_or(Error::UniquenessFailure { rank, dim })?;

    let x = sol.rows(0, n).into_owned();
    let u = sol.rows(n, m).into_owned();
    let y = sol.rows(n + m, n).into_owned();
    Ok(StationaryTriple {
        residual_constraint: (a * &x + b * &u).norm(),
        residual_adjoint: (a.transpose() * &y + c.transpose() * (c * &x - z)).norm(),
        residual_control: (&u + b.transpose() * &y).norm(),
        x_bar: x,
        u_bar: u,
        y_bar: y,
    })
}

/// Solves the saddle-point system
/// `Ax + Bu = 0`, `A^T y + C^T (Cx - z) = 0`, `u + B^T y = 0` directly.
///
/// A rank-deficient system means the optimal pair is not unique and is
/// reported as [`Error::UniquenessFailure`].
pub fn solve_stationary(sys: &LtiSystem, z: &DVector<f64>) -> Result<StationaryTriple> {
    solve_kkt(sys.a(), sys.b(), sys.c(), z)
}

/// Same problem with `B` replaced by `B_k = k (kI - A)^{-1} B`.
pub fn solve_stationary_approx(sys: &LtiSystem, z: &DVector<f64>, k: f64) -> Result<StationaryTriple> {
    let bk = approx_control_operator(sys, k)?;
    solve_kkt(sys.a(), &bk, sys.c(), z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryErrorRow {
    pub k: f64,
    pub err_x: f64,
    pub err_u: f64,
    pub err_y: f64,
}

/// Distance between the smoothed and exact stationary triples for each `k`.
pub fn stationary_convergence_study(sys: &LtiSystem, z: &DVector<f64>, ks: &[f64]) -> Result<Vec<StationaryErrorRow>> {
    check_increasing(ks)?;
    let exact = solve_stationary(sys, z)?;
    let mut rows = ks
        .par_iter()
        .map(|&k| {
            let t = solve_stationary_approx(sys, z, k)?;
            Ok(StationaryErrorRow {
                k,
                err_x: (&t.x_bar - &exact.x_bar).norm(),
                err_u: (&t.u_bar - &exact.u_bar).norm(),
                err_y: (&t.y_bar - &exact.y_bar).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(rows)
}

pub(crate) fn check_increasing(ks: &[f64]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("k list is empty".into()));
    }
    if ks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("k list must be strictly increasing".into()));
    }
    Ok(())
}

pub fn study_csv(rows: &[StationaryErrorRow]) -> String {
    let mut t = Table::new(&["k", "err_x", "err_u", "err_y"]);
    for r in rows {
        t.row(&[num(r.k), num(r.err_x), num(r.err_u), num(r.err_y)]);
    }
    t.finish()
}

/// Cost `|Cx - z|^2 + |u|^2` of a stationary pair.
pub fn stationary_cost(sys: &LtiSystem, z: &DVector<f64>, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (sys.c() * x - z).norm_squared() + u.norm_squared()
}

/// Orthonormal basis of the feasible directions `{(dx, du) : A dx + B du = 0}`.
pub fn feasible_directions(sys: &LtiSystem) -> DMatrix<f64> {
    let mut ab = DMatrix::zeros(sys.n(), sys.n() + sys.m());
    ab.view_mut((0, 0), (sys.n(), sys.n())).copy_from(sys.a());
    ab.view_mut((0, sys.n()), (sys.n(), sys.m())).copy_from(sys.b());
    linalg::null_space(&ab, 1e-12)
}
