//! Small dense linear algebra over [`Real`] scalars.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { F::one() } else { F::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, s: F) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(F::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// `y = L v` for lower-triangular `self`, reading only the lower triangle.
    pub fn lower_mul_vec_into(&self, v: &[F], out: &mut [F]) {
        debug_assert_eq!(self.cols, v.len());
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[i * self.cols..i * self.cols + i + 1];
            *o = row.iter().zip(v).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }

    /// Solves `L x = b` for lower-triangular `self`.
    pub fn forward_solve(&self, b: &[F]) -> Vec<F> {
        let n = self.rows;
        let mut x = vec![F::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for (j, xj) in x.iter().enumerate().take(i) {
                s -= self[(i, j)] * *xj;
            }
            x[i] = s / self[(i, i)];
        }
        x
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Lower Cholesky factor of `self + jitter * I`, or `None` if a pivot is
    /// not strictly positive.
    pub fn cholesky_jittered(&self, jitter: F) -> Option<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                if i == j {
                    s += jitter;
                }
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= l.data[ri + k] * l.data[rj + k];
                }
                if i == j {
                    if !(s > F::zero()) || !s.is_finite() {
                        return None;
                    }
                    l.data[ri + i] = s.sqrt();
                } else {
                    l.data[ri + j] = s / l.data[rj + j];
                }
            }
        }
        Some(l)
    }
}

/// Lower Cholesky factor of the symmetric Toeplitz matrix with first column
/// `col` plus `jitter * I`, in O(n^2) by the Schur algorithm.
///
/// Uses the mixed form of the hyperbolic rotations, which has the same
/// backward stability as dense Cholesky on positive-definite input. Returns
/// `None` if the matrix is not numerically positive definite.
pub fn toeplitz_cholesky<F: Real>(col: &[F], jitter: F) -> Option<Matrix<F>> {
    let n = col.len();
    let mut l = Matrix::zeros(n, n);
    if n == 0 {
        return Some(l);
    }
    let t0 = col[0] + jitter;
    if !(t0 > F::zero()) || !t0.is_finite() {
        return None;
    }
    let root = t0.sqrt();
    let mut u: Vec<F> = col.iter().map(|&c| c / root).collect();
    u[0] = root;
    let mut v = u.clone();
    v[0] = F::zero();
    for k in 0..n {
        for i in k..n {
            l.data[i * n + k] = u[i];
        }
        if k + 1 == n {
            break;
        }
        for j in (k + 1..n).rev() {
            u[j] = u[j - 1];
        }
        let rho = v[k + 1] / u[k + 1];
        if !(rho.abs() < F::one()) {
            return None;
        }
        let s = ((F::one() - rho) * (F::one() + rho)).sqrt();
        for j in k + 1..n {
            let uj = (u[j] - rho * v[j]) / s;
            v[j] = s * v[j] - rho * uj;
            u[j] = uj;
        }
    }
    Some(l)
}

impl<F> Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}
