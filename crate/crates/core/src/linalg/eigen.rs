use nalgebra::DMatrix;

use super::SquareMatrix;
use crate::error::{Error, Result};

/// Dense fallback is only attempted below this size.
const DENSE_FALLBACK_MAX: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

enum Operator<'a> {
    Dense(&'a DMatrix<f64>),
    // (row_ptr, col, val), row-major
    Sparse(Vec<usize>, Vec<usize>, Vec<f64>),
}

impl Operator<'_> {
    fn new(m: &DMatrix<f64>) -> Operator<'_> {
        let n = m.nrows();
        let nnz = m.iter().filter(|v| **v != 0.0).count();
        if nnz * 4 > n * n {
            return Operator::Dense(m);
        }
        let mut ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            ptr.push(col.len());
        }
        Operator::Sparse(ptr, col, val)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Operator::Dense(m) => {
                y.iter_mut().for_each(|v| *v = 0.0);
                for (j, col) in m.column_iter().enumerate() {
                    let xj = x[j];
                    if xj != 0.0 {
                        for (yi, a) in y.iter_mut().zip(col.iter()) {
                            *yi += a * xj;
                        }
                    }
                }
            }
            Operator::Sparse(ptr, col, val) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = (ptr[i]..ptr[i + 1]).map(|k| val[k] * x[col[k]]).sum();
                }
            }
        }
    }
}

/// Largest eigenvalue modulus by power iteration.
///
/// The estimate is `||A x||` for the normalized iterate `x`, which converges
/// to `max |lambda|` for symmetric inputs even when `+l` and `-l` are both
/// eigenvalues (bipartite graphs). Convergence is declared when the relative
/// change between consecutive estimates drops below `tol`. Asymmetric inputs
/// with a dominant complex pair may oscillate and fail to converge.
pub fn spectral_radius(m: &SquareMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let a = m.as_matrix();
    let n = a.nrows();
    if a.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let op = Operator::new(a);
    // Mostly-positive start vector with a deterministic ripple so it is not
    // orthogonal to the dominant eigenvector of common structured matrices.
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 1e-3 * (((i * 7919) % 101) as f64 / 101.0))
        .collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        op.apply(&x, &mut y);
        let est = norm(&y);
        if est == 0.0 {
            // Start vector fell into the null space (or the matrix is nilpotent).
            return if n <= DENSE_FALLBACK_MAX {
                spectral_radius_dense(m)
            } else {
                Ok(0.0)
            };
        }
        change = (est - prev).abs() / est;
        if change <= tol {
            return Ok(est);
        }
        prev = est;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / est;
        }
    }
    Err(Error::NonConvergence {
        max_iter,
        last_change: change,
    })
}

/// Spectral radius from a full eigenvalue computation.
///
/// Symmetric inputs use cyclic Jacobi; general inputs use a real Schur
/// decomposition for their (possibly complex) eigenvalues.
pub fn spectral_radius_dense(m: &SquareMatrix) -> Result<f64> {
    if m.size() == 0 {
        return Ok(0.0);
    }
    if m.is_symmetric(0.0) {
        let (vals, _) = jacobi_eigen(m)?;
        return Ok(vals.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())));
    }
    let eig = m.as_matrix().clone().complex_eigenvalues();
    Ok(eig.iter().fold(0.0, |acc: f64, z| acc.max(z.norm())))
}

/// Eigenvalues of a symmetric matrix, ascending. Fast path for large inputs.
pub fn symmetric_eigenvalues(m: &SquareMatrix) -> Result<Vec<f64>> {
    if !m.is_symmetric(0.0) {
        return Err(Error::Precondition("symmetric_eigenvalues needs a symmetric matrix".into()));
    }
    let mut v: Vec<f64> = m.as_matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Intended for small matrices and as a reference path.
pub fn jacobi_eigen(m: &SquareMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.size();
    let scale = m.norm_frobenius();
    if !m.is_symmetric(1e-12 * scale.max(1.0)) {
        return Err(Error::Precondition("Jacobi eigensolver needs a symmetric matrix".into()));
    }
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let off = |a: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s
    };
    let target = (f64::EPSILON * scale).powi(2);
    let mut sweeps = 0;
    while off(&a) > target {
        sweeps += 1;
        if sweeps > 100 {
            return Err(Error::NonConvergence {
                max_iter: 100,
                last_change: off(&a).sqrt() / scale.max(f64::MIN_POSITIVE),
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
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
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((vals, vecs))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    x.iter_mut().for_each(|v| *v /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(n: usize, d: &[f64]) -> SquareMatrix {
        SquareMatrix::from_row_slice(n, d).unwrap()
    }

    #[test]
    fn k2_zero_and_p3() {
        let pi = PowerIteration::default();
        let k2 = sq(2, &[0., 1., 1., 0.]);
        assert!((spectral_radius(&k2, pi.tol, pi.max_iter).unwrap() - 1.0).abs() < 1e-10);
        let z = sq(1, &[0.0]);
        assert_eq!(spectral_radius(&z, pi.tol, pi.max_iter).unwrap(), 0.0);
        let p3 = sq(3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        let l = spectral_radius(&p3, pi.tol, pi.max_iter).unwrap();
        assert!((l - 2f64.sqrt()).abs() < 1e-9, "{l}");
        assert!((spectral_radius_dense(&p3).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_is_zero() {
        let m = sq(2, &[0., 1., 0., 0.]);
        assert_eq!(spectral_radius(&m, 1e-12, 100).unwrap(), 0.0);
    }

    #[test]
    fn directed_cycle() {
        let c3 = sq(3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        assert!((spectral_radius(&c3, 1e-12, 1000).unwrap() - 1.0).abs() < 1e-10);
        assert!((spectral_radius_dense(&c3).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oscillating_complex_pair_reports_bound() {
        // Non-normal, eigenvalues 1 +/- i: the norm ratio keeps rotating.
        let m = sq(2, &[1.0, 10.0, -0.1, 1.0]);
        match spectral_radius(&m, 1e-12, 50) {
            Err(Error::NonConvergence { max_iter, .. }) => assert_eq!(max_iter, 50),
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!((spectral_radius_dense(&m).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = sq(3, &[2., -1., 0.5, -1., 3., 0.25, 0.5, 0.25, 1.]);
        let (vals, vecs) = jacobi_eigen(&m).unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals.clone()));
        let back = &vecs * d * vecs.transpose();
        assert!((back - m.as_matrix()).norm() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let fast = symmetric_eigenvalues(&m).unwrap();
        for (a, b) in vals.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
