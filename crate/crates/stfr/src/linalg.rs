//! Small dense matrices and direct solves.
//!
//! Every matrix in the discretization lives on a single reference element, so
//! dimensions stay below ~150 even at the highest polynomial degrees used in
//! the experiments. A plain row-major layout with partial-pivot LU is all
//! that is needed; Krylov iteration for the global systems is matrix-free and
//! lives in [`crate::solver`].

use crate::{Error, Real, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, a: S) -> Mat<S> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * a).collect() }
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[S], y: &mut [S]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let mut s = S::zero();
            for (a, &b) in self.row(i).iter().zip(x) {
                s += *a * b;
            }
            y[i] = s;
        }
    }

    /// `y += a * (A x)`.
    pub fn matvec_acc(&self, x: &[S], a: S, y: &mut [S]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let mut s = S::zero();
            for (m, &b) in self.row(i).iter().zip(x) {
                s += *m * b;
            }
            y[i] += a * s;
        }
    }

    /// Kronecker product, index convention `(i_a * b.rows + i_b, j_a * b.cols + j_b)`.
    pub fn kron(&self, b: &Mat<S>) -> Mat<S> {
        let mut out = Mat::zeros(self.rows * b.rows, self.cols * b.cols);
        for ia in 0..self.rows {
            for ja in 0..self.cols {
                let a = self[(ia, ja)];
                for ib in 0..b.rows {
                    for jb in 0..b.cols {
                        out[(ia * b.rows + ib, ja * b.cols + jb)] = a * b[(ib, jb)];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuFactor<S> {
    lu: Mat<S>,
    piv: Vec<usize>,
}

impl<S: Real> LuFactor<S> {
    pub fn new(a: &Mat<S>) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "LU requires a square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut pmax = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == S::zero() || !pmax.is_finite() {
                return Err(Error::Construction(format!(
                    "singular matrix in LU factorization at pivot {k}"
                )));
            }
            if p != k {
                piv.swap(p, k);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let upd = f * lu[(k, j)];
                    lu[(i, j)] -= upd;
                }
            }
        }
        Ok(LuFactor { lu, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [S]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = vec![S::zero(); n];
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        b.copy_from_slice(&x);
    }

    /// Returns `A^{-1} B`.
    pub fn solve_mat(&self, b: &Mat<S>) -> Mat<S> {
        assert_eq!(b.rows(), self.dim());
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![S::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            self.solve(&mut col);
            for i in 0..b.rows() {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Mat<S> {
        self.solve_mat(&Mat::identity(self.dim()))
    }
}

pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut s = S::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

pub fn norm2<S: Real>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// `y += a x`.
pub fn axpy<S: Real>(y: &mut [S], a: S, x: &[S]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scal<S: Real>(y: &mut [S], a: S) {
    for yi in y.iter_mut() {
        *yi *= a;
    }
}
