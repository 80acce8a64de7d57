//! Small dense row-major matrices over any [`Scalar`].
//!
//! Sizes in this crate stay below a few dozen rows, so everything is naive
//! and allocation-happy. Row-times-column products go through
//! [`Scalar::dot`] so tape scalars record one node per entry.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self::from_vec(rows, cols, data.iter().map(|&v| S::cst(v)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.val()).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| S::dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let ot = other.transpose();
        Self::from_fn(self.rows, other.cols, |i, j| S::dot(self.row(i), ot.row(j)))
    }

    /// `selfᵀ · other` without materializing the transpose of `other`.
    pub fn t_matmul(&self, other: &Mat<S>) -> Mat<S> {
        self.transpose().matmul(other)
    }

    pub fn scale(&self, s: S) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat<S>) -> Self {
        assert_eq!(self.shape(), other.shape(), "add shape");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Mat<S>) -> Self {
        assert_eq!(self.shape(), other.shape(), "sub shape");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn add_diag(&self, s: S) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat<S>) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "block out of range"
        );
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Stacks matrices vertically.
    pub fn vstack(parts: &[&Mat<S>]) -> Self {
        let cols = parts[0].cols;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.cols, cols, "vstack columns");
            data.extend_from_slice(&p.data);
        }
        let rows = data.len() / cols.max(1);
        Mat { rows, cols, data }
    }

    /// Strictly lower triangular part.
    pub fn strict_lower(&self) -> Self {
        Self::from_fn(
            self.rows,
            self.cols,
            |i, j| if j < i { self[(i, j)] } else { S::zero() },
        )
    }

    pub fn diag(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn frobenius_sq(&self) -> S {
        S::dot(&self.data, &self.data)
    }

    pub fn frobenius(&self) -> S {
        self.frobenius_sq().sqrt()
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &Mat<S>) -> Result<Mat<S>> {
        let n = self.rows;
        if self.cols != n || rhs.rows != n {
            return Err(Error::Dimension(format!(
                "solve: {}x{} against {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let k = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[(i, c)].val().abs().total_cmp(&a[(j, c)].val().abs()))
                .unwrap_or(c);
            if !a[(p, c)].val().is_finite() {
                return Err(Error::NonFinite("pivot in solve".into()));
            }
            if a[(p, c)].val() == 0.0 {
                return Err(Error::Invalid("singular matrix in solve".into()));
            }
            if p != c {
                for j in 0..n {
                    a.data.swap(p * n + j, c * n + j);
                }
                for j in 0..k {
                    b.data.swap(p * k + j, c * k + j);
                }
            }
            let inv = a[(c, c)].recip();
            for i in c + 1..n {
                let f = a[(i, c)] * inv;
                if f.val() == 0.0 {
                    continue;
                }
                for j in c + 1..n {
                    let t = a[(c, j)];
                    a[(i, j)] -= f * t;
                }
                a[(i, c)] = S::zero();
                for j in 0..k {
                    let t = b[(c, j)];
                    b[(i, j)] -= f * t;
                }
            }
        }
        for c in (0..n).rev() {
            let inv = a[(c, c)].recip();
            for j in 0..k {
                let mut acc = b[(c, j)];
                for l in c + 1..n {
                    acc -= a[(c, l)] * b[(l, j)];
                }
                b[(c, j)] = acc * inv;
            }
        }
        Ok(b)
    }

    pub fn inverse(&self) -> Result<Mat<S>> {
        self.solve(&Mat::identity(self.rows))
    }

    /// Lower factor `L` with `L Lᵀ = self` for a symmetric positive
    /// definite matrix.
    pub fn cholesky(&self) -> Result<Mat<S>> {
        let n = self.rows;
        if self.cols != n {
            return Err(Error::Dimension(format!("cholesky of {}x{}", n, self.cols)));
        }
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = self[(i, j)] - S::dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    if !(s.val() > 0.0) {
                        return Err(Error::Invalid("matrix is not positive definite".into()));
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Solves `self · X = rhs` for lower-triangular `self`.
    pub fn lower_solve(&self, rhs: &Mat<S>) -> Mat<S> {
        let n = self.rows;
        let mut x = Mat::zeros(n, rhs.cols);
        for c in 0..rhs.cols {
            for i in 0..n {
                let mut acc = rhs[(i, c)];
                for k in 0..i {
                    acc -= self[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / self[(i, i)];
            }
        }
        x
    }

    /// Upper bound on the spectral norm from repeated squaring of the Gram
    /// matrix: `‖M‖₂ ≤ ‖(MᵀM)^(2^J)‖_F^(1/2^(J+1))`.
    ///
    /// The bound is sound for every `J` and tight to a factor
    /// `rank^(1/2^(J+2))`. Each square is renormalized and the scale is
    /// carried in log space, so the result is smooth away from `M = 0`.
    pub fn spectral_bound(&self, squarings: u32) -> S {
        let tiny = S::cst(1e-300);
        let mut g = if self.rows >= self.cols {
            self.t_matmul(self)
        } else {
            self.matmul(&self.transpose())
        };
        let c = (g.frobenius_sq() + tiny).sqrt();
        let mut log_scale = c.ln();
        g = g.scale(c.recip());
        for _ in 0..squarings {
            g = g.matmul(&g);
            let c = (g.frobenius_sq() + tiny).sqrt();
            log_scale = log_scale * S::cst(2.0) + c.ln();
            g = g.scale(c.recip());
        }
        (log_scale / S::cst(2f64.powi(squarings as i32 + 1))).exp()
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Exact spectral norm of an `f64` matrix by Jacobi eigenvalues of `MᵀM`.
pub fn spectral_norm(m: &Mat<f64>) -> f64 {
    let g = m.t_matmul(m);
    symmetric_eigenvalues(&g)
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Vec<f64> {
    let n = a.rows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    a.diag()
}
