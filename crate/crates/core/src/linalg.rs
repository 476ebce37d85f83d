//! Small dense linear algebra used by the PCA/LDA stages.
//!
//! Everything here operates on row-major `Vec<f64>` buffers of modest size
//! (at most a few hundred rows), so a cyclic Jacobi eigensolver and a plain
//! Cholesky factorization are plenty. Keeping these in-crate pins down the
//! eigenvector ordering and sign conventions that model determinism relies on.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi on a symmetric `n x n` matrix given row-major.
///
/// Ties in the descending value sort are broken by original index, and each
/// eigenvector is sign-fixed so its first element of magnitude above 1e-12
/// is positive.
pub fn sym_eigen(matrix: &[f64], n: usize) -> SymEigen {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    // v is column-major accumulation: v[i*n + k] = component i of eigenvector k
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>();
    let tol = 1e-28 * (1.0 + frob);

    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if fmath::abs(apq) < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + fmath::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + fmath::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / fmath::sqrt(1.0 + t * t);
                let s = t * c;

                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        values.push(a[k * n + k]);
        let mut vec_k: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
        fix_sign(&mut vec_k);
        vectors.push(vec_k);
    }
    SymEigen { values, vectors }
}

/// Flips the vector so its first element with |x| > 1e-12 is positive.
pub fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if fmath::abs(x) > 1e-12 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky(matrix: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(matrix.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + j] = fmath::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L y = b` (forward substitution) for lower-triangular `L`.
pub fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    y
}

/// Solves `L^T x = y` (back substitution) for lower-triangular `L`.
pub fn solve_lower_t(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// Solves the SPD system `A x = b` by Cholesky. `None` if not SPD.
pub fn solve_spd(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    let y = solve_lower(&l, n, b);
    Some(solve_lower_t(&l, n, &y))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}
