use super::{Lu, SquareMatrix};
use crate::error::{Error, Result};

/// Solves `sys * W + W * sys^T + rhs = 0` for `W`.
///
/// Builds the Kronecker form `(I (x) sys + sys (x) I) vec(W) = -vec(rhs)` and
/// solves it densely, so cost grows as `n^6`; meant for checking results on
/// graphs of at most a few hundred nodes.
pub fn solve_lyapunov(sys: &SquareMatrix, rhs: &SquareMatrix) -> Result<SquareMatrix> {
    let n = sys.size();
    if rhs.size() != n {
        return Err(Error::Shape(format!("system is {n}x{n} but rhs is {0}x{0}", rhs.size())));
    }
    let a = sys.as_matrix();
    let q = rhs.as_matrix();
    let nn = n * n;
    // Column-major vec: index of W[i, j] is j * n + i.
    // (I (x) A) vec(W) = vec(A W);   (A (x) I) vec(W) = vec(W A^T).
    let mut k = vec![0.0; nn * nn];
    for j in 0..n {
        for i in 0..n {
            let row = (j * n + i) * nn;
            for m in 0..n {
                // A[i, m] W[m, j]
                k[row + j * n + m] += a[(i, m)];
                // W[i, m] A[j, m]
                k[row + m * n + i] += a[(j, m)];
            }
        }
    }
    let lu = Lu::factor_row_major(nn, k).map_err(|e| match e {
        Error::Singular { .. } => Error::Unstable,
        other => other,
    })?;
    let b: Vec<f64> = (0..nn).map(|idx| -q[(idx % n, idx / n)]).collect();
    let x = lu.solve_vec(&b);
    SquareMatrix::new(nalgebra::DMatrix::from_fn(n, n, |i, j| x[j * n + i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &SquareMatrix, b: &[f64], tol: f64) {
        let n = a.size();
        for i in 0..n {
            for j in 0..n {
                assert!((a.as_matrix()[(i, j)] - b[i * n + j]).abs() < tol, "{a:?}");
            }
        }
    }

    #[test]
    fn negative_identity() {
        let w = solve_lyapunov(&SquareMatrix::identity(2).scale(-1.0), &SquareMatrix::identity(2)).unwrap();
        close(&w, &[0.5, 0.0, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn half_k2_minus_identity() {
        let sys = SquareMatrix::from_row_slice(2, &[-1.0, 0.5, 0.5, -1.0]).unwrap();
        let w = solve_lyapunov(&sys, &SquareMatrix::identity(2)).unwrap();
        close(&w, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0], 1e-14);
    }

    #[test]
    fn decoupled_diagonal() {
        let (a, b) = (0.7, 3.0);
        let sys = SquareMatrix::from_diagonal(&[-a, -b]).unwrap();
        let w = solve_lyapunov(&sys, &SquareMatrix::identity(2)).unwrap();
        close(&w, &[1.0 / (2.0 * a), 0.0, 0.0, 1.0 / (2.0 * b)], 1e-15);
    }

    #[test]
    fn nonsymmetric_residual() {
        let sys = SquareMatrix::from_row_slice(3, &[-2.0, 0.3, 0.0, 0.1, -1.0, 0.4, 0.0, -0.2, -1.5]).unwrap();
        let q = SquareMatrix::from_row_slice(3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 1.0]).unwrap();
        let w = solve_lyapunov(&sys, &q).unwrap();
        let a = sys.as_matrix();
        let r = a * w.as_matrix() + w.as_matrix() * a.transpose() + q.as_matrix();
        assert!(r.norm() < 1e-12 * q.norm_frobenius());
    }

    #[test]
    fn singular_system_is_unstable() {
        // Eigenvalues +1 and -1 sum to zero.
        let sys = SquareMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(
            solve_lyapunov(&sys, &SquareMatrix::identity(2)),
            Err(Error::Unstable)
        ));
    }
}
