//! Dense numerical kernels: spectral radius, matrix exponential, LU solves
//! and a Kronecker-form Lyapunov solver.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; [`SquareMatrix`] is the validated
//! square, finite form the kernels accept.

mod eigen;
mod expm;
mod lu;
mod lyapunov;

pub use eigen::{
    jacobi_eigen, spectral_radius, spectral_radius_dense, symmetric_eigenvalues, PowerIteration,
};
pub use expm::matrix_exp;
pub use lu::Lu;
pub use lyapunov::solve_lyapunov;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("matrix has non-finite entries".into()));
        }
        Ok(SquareMatrix(m))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        SquareMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SquareMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        Self::new(m)
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn transpose(&self) -> SquareMatrix {
        SquareMatrix(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> SquareMatrix {
        SquareMatrix(&self.0 * c)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..i).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= tol))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        norm_one(&self.0)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.0.norm()
    }
}

impl AsRef<DMatrix<f64>> for SquareMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub(crate) fn norm_one(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
