use nalgebra::DMatrix;

use super::SquareMatrix;
use crate::error::{Error, Result};

// Taylor degree and the 1-norm the scaled argument must not exceed. At
// ||B|| <= 1/2 the truncation remainder is below 1e-19.
const DEGREE: usize = 16;
const THETA: f64 = 0.5;
// Beyond this the result overflows f64 for any matrix with a positive
// eigenvalue near the norm; refuse early.
const MAX_NORM: f64 = 700.0;

/// Matrix exponential by scaling and squaring around a degree-16 Taylor
/// polynomial evaluated with the Paterson-Stockmeyer scheme (7 products).
pub fn matrix_exp(m: &SquareMatrix) -> Result<SquareMatrix> {
    let a = m.as_matrix();
    let n = a.nrows();
    let norm = m.norm_one();
    if norm == 0.0 {
        return Ok(SquareMatrix::identity(n));
    }
    if norm > MAX_NORM {
        return Err(Error::ExpOverflow { norm });
    }
    let squarings = if norm > THETA {
        (norm / THETA).log2().ceil() as u32
    } else {
        0
    };
    let b = a / 2f64.powi(squarings as i32);
    let mut r = taylor_ps(&b);
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpOverflow { norm });
    }
    Ok(SquareMatrix(r))
}

fn taylor_ps(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut coef = [0.0; DEGREE + 1];
    coef[0] = 1.0;
    for k in 1..=DEGREE {
        coef[k] = coef[k - 1] / k as f64;
    }
    let id = DMatrix::<f64>::identity(n, n);
    let b2 = b * b;
    let b3 = &b2 * b;
    let b4 = &b2 * &b2;
    let powers = [&id, b, &b2, &b3];
    // Block j holds coefficients 4j..4j+3 applied to I, B, B^2, B^3.
    let block = |j: usize| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(n, n);
        for (i, p) in powers.iter().enumerate() {
            let k = 4 * j + i;
            if k <= DEGREE {
                acc += *p * coef[k];
            }
        }
        acc
    };
    let mut r = block(DEGREE / 4);
    for j in (0..DEGREE / 4).rev() {
        r = &r * &b4 + block(j);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_identity() {
        let e = matrix_exp(&SquareMatrix::zeros(2)).unwrap();
        assert_eq!(e, SquareMatrix::identity(2));
    }

    #[test]
    fn diagonal() {
        let e = matrix_exp(&SquareMatrix::from_diagonal(&[-1.0, -2.0]).unwrap()).unwrap();
        let m = e.as_matrix();
        assert!((m[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((m[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn involutory_closed_form() {
        let k2 = SquareMatrix::from_row_slice(2, &[0., 1., 1., 0.]).unwrap();
        let e = matrix_exp(&k2).unwrap();
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        let m = e.as_matrix();
        assert!((m[(0, 0)] - c).abs() < 1e-14 && (m[(1, 1)] - c).abs() < 1e-14);
        assert!((m[(0, 1)] - s).abs() < 1e-14 && (m[(1, 0)] - s).abs() < 1e-14);
    }

    #[test]
    fn overflow_is_reported() {
        let big = SquareMatrix::from_diagonal(&[1e4]).unwrap();
        assert!(matches!(matrix_exp(&big), Err(Error::ExpOverflow { .. })));
    }
}
