//! Dense direct solve of the unclamped fixed-point equations.
//!
//! Ignoring the clamp, the fixed point satisfies
//!
//! ```text
//! b = (D+)^-1 (W 1 - C r)
//! r = (D-)^-1 (W^T 1 - alpha C^T b)
//! ```
//!
//! Substituting the second equation into the first gives
//! `(I - alpha P) b = m` with the user co-reference operator
//! `P = (D+)^-1 C (D-)^-1 C^T` and `m = (D+)^-1 (W 1 - C (D-)^-1 W^T 1)`.
//! `P` is row stochastic, so its spectral radius is 1 and the system is
//! nonsingular for every `alpha < 1`.
//!
//! This is an O(users^3) oracle for small instances, independent of the
//! sweep code in [`crate::solver`].

use crate::error::{DebiasError, Result};
use crate::graph::RatingGraph;
use crate::scalar::Scalar;

/// Largest `users * items` accepted by [`build_dense`].
pub const MAX_DENSE_ENTRIES: usize = 1_000_000;
/// Largest user count accepted by [`build_dense`]; the co-reference system is
/// users x users and factored in cubic time.
pub const MAX_DENSE_USERS: usize = 4096;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn transpose_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o = *o + a * xr;
            }
        }
        out
    }

    /// Solves `self * x = rhs` by Gaussian elimination with partial pivoting.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(rhs.len(), self.rows);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = rhs.to_vec();
        let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let tiny = T::epsilon() * T::of_count(n.max(1)) * scale * T::of(16.0);

        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col]
                        .abs()
                        .partial_cmp(&a[q * n + col].abs())
                        .expect("finite entries")
                })
                .expect("non-empty range");
            let pivot = a[pivot_row * n + col];
            if !(pivot.abs() > tiny) {
                return Err(DebiasError::Singular);
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                }
                x.swap(col, pivot_row);
            }
            for r in col + 1..n {
                let factor = a[r * n + col] / pivot;
                if factor == T::zero() {
                    continue;
                }
                for k in col..n {
                    a[r * n + k] = a[r * n + k] - factor * a[col * n + k];
                }
                x[r] = x[r] - factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for k in col + 1..n {
                acc = acc - a[col * n + k] * x[k];
            }
            x[col] = acc / a[col * n + col];
        }
        Ok(x)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Dense transcription of a rating graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem<T> {
    /// users x items, zero where no edge.
    pub weights: Matrix<T>,
    /// users x items, 1 where an edge exists.
    pub connection: Matrix<T>,
    /// Diagonal of D+.
    pub user_degree: Vec<T>,
    /// Diagonal of D-.
    pub item_degree: Vec<T>,
    pub alpha: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution<T> {
    pub bias: Vec<T>,
    pub rating: Vec<T>,
}

pub fn build_dense<T: Scalar>(graph: &RatingGraph<T>, alpha: T) -> Result<DenseSystem<T>> {
    let (users, items) = (graph.num_users(), graph.num_items());
    if users == 0 || items == 0 {
        return Err(DebiasError::InvalidGraph("dense system needs at least one item".into()));
    }
    if users.saturating_mul(items) > MAX_DENSE_ENTRIES || users > MAX_DENSE_USERS {
        return Err(DebiasError::SizeGuard { users, items });
    }
    let mut weights = Matrix::zeros(users, items);
    let mut connection = Matrix::zeros(users, items);
    for e in graph.edges() {
        weights[(e.user, e.item)] = e.weight;
        connection[(e.user, e.item)] = T::one();
    }
    let user_degree = (0..users).map(|u| connection.row(u).iter().copied().sum()).collect();
    let item_degree = connection.transpose_mul_vec(&vec![T::one(); users]);
    Ok(DenseSystem {
        weights,
        connection,
        user_degree,
        item_degree,
        alpha,
    })
}

impl<T: Scalar> DenseSystem<T> {
    pub fn num_users(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_items(&self) -> usize {
        self.weights.cols()
    }

    /// `(D+)^-1 C (D-)^-1 C^T`, users x users.
    pub fn coreference(&self) -> Matrix<T> {
        let users = self.num_users();
        let mut out = Matrix::zeros(users, users);
        for j in 0..self.num_items() {
            let raters: Vec<usize> = (0..users)
                .filter(|&i| self.connection[(i, j)] != T::zero())
                .collect();
            let inv_item = pinv(self.item_degree[j]);
            for &i in &raters {
                let coeff = pinv(self.user_degree[i]) * inv_item;
                for &k in &raters {
                    out[(i, k)] = out[(i, k)] + coeff;
                }
            }
        }
        out
    }

    /// `(D+)^-1 (W 1 - C (D-)^-1 W^T 1)`
    pub fn m_vector(&self) -> Vec<T> {
        let row_sums = self.weights.mul_vec(&vec![T::one(); self.num_items()]);
        let col_means: Vec<T> = self
            .weights
            .transpose_mul_vec(&vec![T::one(); self.num_users()])
            .iter()
            .zip(&self.item_degree)
            .map(|(&s, &d)| s * pinv(d))
            .collect();
        let spread = self.connection.mul_vec(&col_means);
        row_sums
            .iter()
            .zip(&spread)
            .zip(&self.user_degree)
            .map(|((&w, &c), &d)| (w - c) * pinv(d))
            .collect()
    }

    /// `(D-)^-1 (W^T 1 - alpha C^T b)`
    pub fn rating_from_bias(&self, bias: &[T]) -> Vec<T> {
        let col_sums = self.weights.transpose_mul_vec(&vec![T::one(); self.num_users()]);
        let pulled = self.connection.transpose_mul_vec(bias);
        col_sums
            .iter()
            .zip(&pulled)
            .zip(&self.item_degree)
            .map(|((&s, &p), &d)| (s - self.alpha * p) * pinv(d))
            .collect()
    }

    /// `(D+)^-1 (W 1 - C r)`
    pub fn bias_from_rating(&self, rating: &[T]) -> Vec<T> {
        let row_sums = self.weights.mul_vec(&vec![T::one(); self.num_items()]);
        let pulled = self.connection.mul_vec(rating);
        row_sums
            .iter()
            .zip(&pulled)
            .zip(&self.user_degree)
            .map(|((&s, &p), &d)| (s - p) * pinv(d))
            .collect()
    }

    /// Max-norm residual of both unclamped fixed-point equations.
    pub fn residual(&self, bias: &[T], rating: &[T]) -> T {
        let db = crate::scalar::linf_distance(&self.bias_from_rating(rating), bias);
        let dr = crate::scalar::linf_distance(&self.rating_from_bias(bias), rating);
        db.max(dr)
    }

    /// Power-iteration estimate of the spectral radius of the co-reference
    /// operator.
    pub fn spectral_radius_estimate(&self, iterations: usize) -> T {
        let p = self.coreference();
        let mut x = vec![T::one(); self.num_users()];
        let mut estimate = T::zero();
        for _ in 0..iterations.max(1) {
            let y = p.mul_vec(&x);
            let norm = y.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
            if norm == T::zero() {
                return T::zero();
            }
            let prev = x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
            estimate = norm / prev;
            x = y.into_iter().map(|v| v / norm).collect();
        }
        estimate
    }
}

pub fn solve_linear<T: Scalar>(system: &DenseSystem<T>) -> Result<LinearSolution<T>> {
    let mut a = system.coreference();
    let n = a.rows();
    for r in 0..n {
        for c in 0..n {
            let delta = if r == c { T::one() } else { T::zero() };
            a[(r, c)] = delta - system.alpha * a[(r, c)];
        }
    }
    let bias = a.solve(&system.m_vector())?;
    let rating = system.rating_from_bias(&bias);
    Ok(LinearSolution { bias, rating })
}

/// Moore-Penrose inverse of a diagonal entry.
fn pinv<T: Scalar>(d: T) -> T {
    if d == T::zero() {
        T::zero()
    } else {
        d.recip()
    }
}
