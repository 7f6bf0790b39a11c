//! Small dense eigenvalue routines.
//!
//! Sizes here are at most a few tens, so O(m^3) sweeps are fine.

use nalgebra::{DMatrix, DVector};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Only the symmetric part of `a` is meaningful; the caller is
/// responsible for passing a symmetric matrix.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    assert!(a.is_square(), "jacobi_eigen needs a square matrix");
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                // smaller root of t^2 + 2 theta t - 1 = 0
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    jacobi_eigen(a).0
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Spectral radius estimate by power iteration.
///
/// The growth factor `|A v| / |v|` of the normalised iterate converges to the
/// largest eigenvalue magnitude whenever that magnitude is attained by real
/// eigenvalues (including a `±λ` pair); complex dominant pairs are handled by
/// [`spectral_radius`].
pub fn power_iteration_radius(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    assert!(a.is_square(), "power iteration needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no special symmetry
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= tol * norm.max(1.0);
        estimate = norm;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Largest eigenvalue magnitude from a dense decomposition: Jacobi for
/// symmetric input, real Schur form otherwise.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if is_symmetric(a, 1e-12) {
        symmetric_eigenvalues(a)
            .into_iter()
            .fold(0.0, |acc, l| acc.max(l.abs()))
    } else {
        a.complex_eigenvalues()
            .iter()
            .fold(0.0, |acc, l| acc.max(l.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal_input() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, _) = jacobi_eigen(&a);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let (vals, vecs) = jacobi_eigen(&a);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vals));
        let back = &vecs * d * vecs.transpose();
        assert!((back - &a).abs().max() < 1e-12);
        let gram = vecs.transpose() * &vecs;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn power_iteration_handles_sign_pair() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 0.3]));
        assert!((power_iteration_radius(&a, 1e-14, 10_000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_radius_of_rotation() {
        // eigenvalues 0.5 e^{±iπ/2}
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&a) - 0.5).abs() < 1e-12);
    }
}
