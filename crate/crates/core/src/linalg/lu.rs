use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, stored row-major.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    data: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::Shape(format!("LU of a {}x{} matrix", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = a[(i, j)];
            }
        }
        Self::factor_row_major(n, data)
    }

    pub(crate) fn factor_row_major(n: usize, mut data: Vec<f64>) -> Result<Lu> {
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n.max(1) as f64;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, data[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= tiny || pv == 0.0 {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let (head, tail) = data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let inv = 1.0 / pivot_row[k];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] * inv;
                row[k] = f;
                if f != 0.0 {
                    for (r, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                        *r -= f * u;
                    }
                }
            }
        }
        Ok(Lu { n, data, perm })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.data[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.data[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::Shape(format!("right-hand side has {} rows, expected {}", b.nrows(), self.n)));
        }
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for (j, col) in b.column_iter().enumerate() {
            let col: Vec<f64> = col.iter().copied().collect();
            out.set_column(j, &nalgebra::DVector::from_vec(self.solve_vec(&col)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let x_true = DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let b = &a * &x_true;
        let x = Lu::factor(&a).unwrap().solve(&b).unwrap();
        assert!((x - x_true).norm() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lu::factor(&a), Err(Error::Singular { .. })));
    }
}
