//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra` dynamic matrices. The only nontrivial
//! algorithms are the ordered complex Schur form (used for the stable
//! invariant subspace of the Hamiltonian) and a Bartels-Stewart Lyapunov
//! solver built on top of it.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex<f64>>;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 1 {
        return vec![Complex::new(m[(0, 0)], 0.0)];
    }
    let (_, t) = nalgebra::linalg::Schur::new(to_complex(m)).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).max()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).min()
}

/// Numerical rank: number of singular values above `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.max();
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

/// Orthonormal basis (as columns) of the null space of `m`.
///
/// The matrix is padded with zero rows to be square so the SVD returns the
/// full right singular basis.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut padded = DMatrix::zeros(r.max(c), c);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let cut = rel_tol * smax.max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Complex Schur form `m = Q T Q^H`.
pub fn complex_schur(m: &DMatrix<f64>) -> (CMatrix, CMatrix) {
    nalgebra::linalg::Schur::new(to_complex(m)).unpack()
}

/// Swaps the adjacent diagonal entries `k` and `k+1` of the upper triangular
/// `t`, updating `q` so that `Q T Q^H` is unchanged.
fn swap_adjacent(q: &mut CMatrix, t: &mut CMatrix, k: usize) {
    let a = t[(k, k)];
    let c = t[(k + 1, k + 1)];
    let b = t[(k, k + 1)];
    // Eigenvector of the 2x2 block belonging to `c`.
    let x0 = b;
    let x1 = c - a;
    let nrm = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    let v0 = x0 / nrm;
    let v1 = x1 / nrm;
    let g = [[v0, -v1.conj()], [v1, v0.conj()]];

    let n = t.nrows();
    for i in 0..n {
        let p = t[(i, k)];
        let r = t[(i, k + 1)];
        t[(i, k)] = p * g[0][0] + r * g[1][0];
        t[(i, k + 1)] = p * g[0][1] + r * g[1][1];
    }
    for j in 0..n {
        let p = t[(k, j)];
        let r = t[(k + 1, j)];
        t[(k, j)] = g[0][0].conj() * p + g[1][0].conj() * r;
        t[(k + 1, j)] = g[0][1].conj() * p + g[1][1].conj() * r;
    }
    for i in 0..q.nrows() {
        let p = q[(i, k)];
        let r = q[(i, k + 1)];
        q[(i, k)] = p * g[0][0] + r * g[1][0];
        q[(i, k + 1)] = p * g[0][1] + r * g[1][1];
    }
    t[(k + 1, k)] = Complex::new(0.0, 0.0);
}

/// Reorders a complex Schur form so that every eigenvalue accepted by
/// `select` occupies the leading diagonal positions. Returns the number of
/// selected eigenvalues.
pub fn reorder_schur<F>(q: &mut CMatrix, t: &mut CMatrix, select: F) -> usize
where
    F: Fn(Complex<f64>) -> bool,
{
    let n = t.nrows();
    let mut placed = 0;
    for i in 0..n {
        if select(t[(i, i)]) {
            let mut k = i;
            while k > placed {
                swap_adjacent(q, t, k - 1);
                k -= 1;
            }
            placed += 1;
        }
    }
    placed
}

/// Solves `A^T X + X A + W = 0` by Bartels-Stewart on the complex Schur form
/// of `A`. Requires `lambda_i + conj(lambda_j) != 0` for all eigenvalue pairs,
/// which holds whenever `A` is Hurwitz.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let (q, t) = complex_schur(a);
    let r = -(q.adjoint() * to_complex(w) * &q);
    let mut y = CMatrix::zeros(n, n);
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for j in 0..n {
        let mut rhs: Vec<Complex<f64>> = (0..n).map(|p| r[(p, j)]).collect();
        for l in 0..j {
            let tlj = t[(l, j)];
            if tlj != Complex::new(0.0, 0.0) {
                for p in 0..n {
                    rhs[p] -= y[(p, l)] * tlj;
                }
            }
        }
        for p in 0..n {
            let mut acc = rhs[p];
            for qq in 0..p {
                acc -= t[(qq, p)].conj() * y[(qq, j)];
            }
            let d = t[(p, p)].conj() + t[(j, j)];
            if d.norm() <= 1e-14 * scale {
                return Err(Error::Numerical(
                    "Lyapunov operator is singular (eigenvalues symmetric about the imaginary axis)".into(),
                ));
            }
            y[(p, j)] = acc / d;
        }
    }
    let x = &q * y * q.adjoint();
    Ok(symmetrize(&x.map(|z| z.re)))
}

/// Maximum over the nodes of the Euclidean distance between two sequences.
pub fn max_node_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reordered_schur_is_still_a_factorization() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.0, -1.0, //
                -3.0, 0.5, 1.0, 0.0, //
                0.0, 1.0, -2.0, 1.0, //
                1.0, 0.0, 0.3, -0.7,
            ],
        );
        let (mut q, mut t) = complex_schur(&m);
        let count = reorder_schur(&mut q, &mut t, |z| z.re < 0.0);
        let recon = &q * &t * q.adjoint();
        assert!((recon - to_complex(&m)).norm() < 1e-12);
        for i in 0..4 {
            assert_eq!(t[(i, i)].re < 0.0, i < count);
            for j in 0..i {
                assert!(t[(i, j)].norm() < 1e-12);
            }
        }
        let unit = q.adjoint() * &q - CMatrix::identity(4, 4);
        assert!(unit.norm() < 1e-12);
    }

    #[test]
    fn lyapunov_matches_scalar_formula() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let w = DMatrix::from_element(1, 1, 3.0);
        let x = solve_lyapunov(&a, &w).unwrap();
        assert!((x[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_residual_on_nonnormal_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 5.0, 0.0, 0.0, -2.0, 3.0, 1.0, 0.0, -4.0]);
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let x = solve_lyapunov(&a, &w).unwrap();
        let res = a.transpose() * &x + &x * &a + &w;
        assert!(res.norm() < 1e-12 * w.norm());
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-14);
    }

    #[test]
    fn rank_detects_deficiency() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert_eq!(rank(&m, 1e-10), 1);
    }
}
