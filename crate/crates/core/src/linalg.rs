//! Small dense linear algebra: row-major matrices, a one-sided Jacobi SVD,
//! numerical rank and minimum-norm least squares.

use std::ops::{Index, IndexMut};

use crate::real::Real;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| crate::real::dot(self.row(i), v)).collect()
    }

    /// Computes `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Horizontal concatenation `[self other]`.
    pub fn hcat(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        })
    }

    /// Vertical concatenation.
    pub fn vcat(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        crate::real::norm_inf(&self.data)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Thin SVD `A = U diag(s) Vᵀ` with `k = min(rows, cols)` singular triplets,
/// sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        if a.rows >= a.cols {
            jacobi_tall(a)
        } else {
            let t = jacobi_tall(&a.transpose());
            Svd { u: t.v, s: t.s, v: t.u }
        }
    }

    pub fn max_singular(&self) -> T {
        self.s.first().copied().unwrap_or_else(T::zero)
    }

    pub fn rank(&self) -> usize {
        let smax = self.max_singular();
        if smax <= T::zero() {
            return 0;
        }
        let tol = smax * T::lit(RANK_RTOL);
        self.s.iter().filter(|&&s| s > tol).count()
    }

    /// Minimum-norm least-squares solution of `A x = b`.
    pub fn solve_min_norm(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.u.rows);
        let n = self.v.rows;
        let mut x = vec![T::zero(); n];
        let r = self.rank();
        for j in 0..r {
            let mut c = T::zero();
            for i in 0..self.u.rows {
                c += self.u[(i, j)] * b[i];
            }
            c /= self.s[j];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += c * self.v[(i, j)];
            }
        }
        x
    }
}

// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
fn jacobi_tall<T: Real>(a: &Matrix<T>) -> Svd<T> {
    let (m, n) = (a.rows, a.cols);
    let mut u = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut s: Vec<T> = (0..n)
        .map(|j| (0..m).fold(T::zero(), |acc, i| acc + u[(i, j)] * u[(i, j)]).sqrt())
        .collect();
    for (j, &sj) in s.iter().enumerate() {
        if sj > T::zero() {
            for i in 0..m {
                u[(i, j)] /= sj;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = Matrix::from_fn(m, n, |i, j| u[(i, order[j])]);
    let v_sorted = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    s = order.iter().map(|&j| s[j]).collect();
    Svd { u: u_sorted, s, v: v_sorted }
}

pub fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    Svd::new(a).s
}

/// Rank with singular values counted above `RANK_RTOL * s_max`.
pub fn numerical_rank<T: Real>(a: &Matrix<T>) -> usize {
    if a.rows == 0 || a.cols == 0 {
        return 0;
    }
    Svd::new(a).rank()
}

pub fn lstsq_min_norm<T: Real>(a: &Matrix<T>, b: &[T]) -> Vec<T> {
    Svd::new(a).solve_min_norm(b)
}
