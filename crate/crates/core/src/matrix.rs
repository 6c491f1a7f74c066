//! Small dense matrices over a [`Scalar`].

use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{JsrFloat, Scalar};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: bad.len(),
            });
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, c: &T) -> Self {
        self.map(|x| x.clone() * c.clone())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        })
    }

    fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: rhs.rows,
            });
        }
        if self.cols != rhs.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: rhs.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let b = rhs.get(k, j);
                    if !b.is_zero() {
                        let idx = i * rhs.cols + j;
                        out.data[idx] = out.data[idx].clone() + a.clone() * b.clone();
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        (0..self.cols)
            .map(|j| (0..self.rows).fold(T::zero(), |acc, i| acc + self.get(i, j).clone()))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn is_negligible(&self) -> bool {
        self.data.iter().all(Scalar::is_negligible)
    }

    /// Determinant by Gaussian elimination in the field `T`,
    /// choosing the largest available pivot.
    pub fn determinant(&self) -> Result<T> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = T::one();
        for k in 0..n {
            let pivot = (k..n).filter(|&r| !a[r * n + k].is_zero()).max_by(|&x, &y| {
                a[x * n + k]
                    .abs()
                    .partial_cmp(&a[y * n + k].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let Some(p) = pivot else {
                return Ok(T::zero());
            };
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                det = -det;
            }
            let piv = a[k * n + k].clone();
            det = det * piv.clone();
            for r in k + 1..n {
                let f = a[r * n + k].clone() / piv.clone();
                if f.is_zero() {
                    continue;
                }
                for c in k..n {
                    let v = a[r * n + c].clone() - f.clone() * a[k * n + c].clone();
                    a[r * n + c] = v;
                }
            }
        }
        Ok(det)
    }

    /// Solves `self * X = rhs` for `X` when the system is consistent.
    /// `self` must have full column rank; returns `None` otherwise or when
    /// some column of `rhs` is outside the column space.
    pub fn solve_columns(&self, rhs: &Self) -> Option<Self> {
        if rhs.rows != self.rows {
            return None;
        }
        let (m, n, k) = (self.rows, self.cols, rhs.cols);
        let w = n + k;
        let mut a: Vec<T> = Vec::with_capacity(m * w);
        for i in 0..m {
            a.extend(self.row(i).iter().cloned());
            a.extend(rhs.row(i).iter().cloned());
        }
        let mut pivot_rows = Vec::with_capacity(n);
        let mut r = 0;
        for c in 0..n {
            let p = (r..m).filter(|&i| !a[i * w + c].is_negligible()).max_by(|&x, &y| {
                a[x * w + c]
                    .abs()
                    .partial_cmp(&a[y * w + c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            for j in 0..w {
                a.swap(r * w + j, p * w + j);
            }
            let piv = a[r * w + c].clone();
            for j in c..w {
                a[r * w + j] = a[r * w + j].clone() / piv.clone();
            }
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = a[i * w + c].clone();
                if f.is_zero() {
                    continue;
                }
                for j in c..w {
                    let v = a[i * w + j].clone() - f.clone() * a[r * w + j].clone();
                    a[i * w + j] = v;
                }
            }
            pivot_rows.push(r);
            r += 1;
        }
        for i in r..m {
            if (n..w).any(|j| !a[i * w + j].is_negligible()) {
                return None;
            }
        }
        Some(Self::from_fn(n, k, |i, j| a[pivot_rows[i] * w + n + j].clone()))
    }

    /// Lossy conversion to an `nalgebra` matrix, once per matrix.
    pub fn to_dmatrix<F: JsrFloat>(&self) -> DMatrix<F> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| F::lit(self.get(i, j).to_f64_lossy()))
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.matmul(rhs).expect("inner dimensions agree")
    }
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(ToString::to_string).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn rational_determinant_is_exact() {
        let m = Matrix::from_rows(vec![
            vec![q(1, 2), q(1, 3), q(0, 1)],
            vec![q(1, 3), q(1, 4), q(1, 5)],
            vec![q(0, 1), q(1, 5), q(1, 6)],
        ])
        .unwrap();
        // 1/2(1/24 - 1/25) - 1/3(1/18) = 1/1200 - 1/54
        assert_eq!(m.determinant().unwrap(), q(1, 1200) - q(1, 54));
        assert_eq!(Matrix::<Rational>::identity(4).determinant().unwrap(), q(1, 1));
    }

    #[test]
    fn solve_columns_recovers_solution() {
        let b = Matrix::from_rows(vec![
            vec![q(1, 1), q(0, 1)],
            vec![q(-1, 1), q(1, 1)],
            vec![q(0, 1), q(-1, 1)],
        ])
        .unwrap();
        let x = Matrix::from_rows(vec![vec![q(1, 2), q(3, 1)], vec![q(-2, 7), q(0, 1)]]).unwrap();
        let y = &b * &x;
        assert_eq!(b.solve_columns(&y).unwrap(), x);
        let outside = Matrix::from_rows(vec![vec![q(1, 1)], vec![q(1, 1)], vec![q(1, 1)]]).unwrap();
        assert!(b.solve_columns(&outside).is_none());
    }

    #[test]
    fn column_sums_and_transpose() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.column_sums(), vec![4.0, 6.0]);
        assert_eq!(m.transpose().column_sums(), vec![3.0, 7.0]);
        assert_eq!(m.mul_vec(&[1.0, -1.0]), vec![-1.0, -1.0]);
    }
}
