//! Small dense matrices over any [`Scalar`].
//!
//! Sized for networks of a few dozen buses: the oracle assembles KKT systems
//! of a few hundred unknowns at most.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = d.clone();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a.clone() * rhs[(k, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + prod;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| T::max_of(acc, v.abs()))
    }

    /// Solves `self * x = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` when the matrix is singular to pivot tolerance.
    pub fn solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, rhs.len(), "rhs length mismatch");
        let n = self.rows;
        let threshold = T::pivot_tolerance() * T::max_of(self.max_abs(), T::one());
        let mut a = self.clone();
        let mut b = rhs.to_vec();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .abs()
                        .partial_cmp(&a[(j, col)].abs())
                        .expect("NaN in matrix")
                })
                .expect("nonempty range");
            let pivot = a[(pivot_row, col)].clone();
            if pivot.is_zero() || pivot.abs() <= threshold {
                return None;
            }
            if pivot_row != col {
                a.swap_rows(pivot_row, col);
                b.swap(pivot_row, col);
            }
            for r in col + 1..n {
                if a[(r, col)].is_zero() {
                    continue;
                }
                let factor = a[(r, col)].clone() / pivot.clone();
                for c in col..n {
                    let delta = factor.clone() * a[(col, c)].clone();
                    a[(r, c)] = a[(r, c)].clone() - delta;
                }
                let delta = factor * b[col].clone();
                b[r] = b[r].clone() - delta;
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut acc = b[i].clone();
            for j in i + 1..n {
                acc = acc - a[(i, j)].clone() * x[j].clone();
            }
            x[i] = acc / a[(i, i)].clone();
        }
        Some(x)
    }

    /// Rank by row echelon reduction. Exact for rational scalars.
    pub fn rank(&self) -> usize {
        let threshold = T::pivot_tolerance() * T::max_of(self.max_abs(), T::one());
        let mut a = self.clone();
        let mut rank = 0;
        for col in 0..a.cols {
            if rank == a.rows {
                break;
            }
            let pivot_row = (rank..a.rows)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .abs()
                        .partial_cmp(&a[(j, col)].abs())
                        .expect("NaN in matrix")
                })
                .expect("nonempty range");
            let pivot = a[(pivot_row, col)].clone();
            if pivot.is_zero() || pivot.abs() <= threshold {
                continue;
            }
            a.swap_rows(pivot_row, rank);
            for r in rank + 1..a.rows {
                if a[(r, col)].is_zero() {
                    continue;
                }
                let factor = a[(r, col)].clone() / pivot.clone();
                for c in col..a.cols {
                    let delta = factor.clone() * a[(rank, c)].clone();
                    a[(r, c)] = a[(r, c)].clone() - delta;
                }
            }
            rank += 1;
        }
        rank
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| T::max_of(acc, x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use num_rational::BigRational;

    #[test]
    fn solves_small_system() {
        let a = DenseMatrix::from_rows(vec![vec![2.0f64, 1.0], vec![1.0, 3.0]]);
        let x = a.solve(&[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_returns_none() {
        let a = DenseMatrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(a.solve(&[1.0, 2.0]).is_none());
        assert_eq!(a.rank(), 1);
    }

    #[test]
    fn exact_rational_solve() {
        let a: DenseMatrix<BigRational> = DenseMatrix::from_rows(vec![
            vec![rational(1, 3), rational(1, 1)],
            vec![rational(2, 1), rational(-1, 7)],
        ]);
        let rhs = vec![rational(1, 1), rational(0, 1)];
        let x = a.solve(&rhs).unwrap();
        assert_eq!(a.mul_vec(&x), rhs);
    }
}
