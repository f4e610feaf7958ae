//! Dense Cholesky factorization and symmetric positive-definite solves.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &Tensor) -> Result<Self> {
        let n = check_square(a)?;
        let src = a.data();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = src[j * n + j];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
            }
            let d = diag.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = src[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A·x = b` in place for a single right-hand side.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }

    pub fn solve(&self, b: &Tensor) -> Result<Tensor> {
        let (rows, cols) = rhs_dims(b);
        if rows != self.n {
            return Err(Error::DimensionMismatch(format!(
                "system of size {} with right-hand side {:?}",
                self.n,
                b.shape()
            )));
        }
        let mut out = b.clone();
        let mut col = vec![0.0; rows];
        for j in 0..cols {
            for i in 0..rows {
                col[i] = b.data()[i * cols + j];
            }
            self.solve_in_place(&mut col);
            for i in 0..rows {
                out.data_mut()[i * cols + j] = col[i];
            }
        }
        Ok(out)
    }
}

/// Solves `A·X = B` for symmetric positive-definite `A`.
///
/// `B` may be a vector (one right-hand side) or an `n×m` matrix.
pub fn solve_spd(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = check_square(a)?;
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-10 * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Cholesky::factor(a)?.solve(b)
}

fn check_square(a: &Tensor) -> Result<usize> {
    if a.shape().len() != 2 || a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!("expected square matrix, got {:?}", a.shape())));
    }
    Ok(a.rows())
}

fn rhs_dims(b: &Tensor) -> (usize, usize) {
    match b.shape().len() {
        1 => (b.len(), 1),
        _ => (b.rows(), b.cols()),
    }
}
