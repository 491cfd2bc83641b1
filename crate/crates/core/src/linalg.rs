//! Dense linear algebra and the matrix-free conjugate gradient solver.
//!
//! Everything here works in `f64`. Matrices are row-major.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_len("DenseMatrix::from_rows", c, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec", self.cols, v.len())?;
        Ok(self.matvec_unchecked(v))
    }

    pub(crate) fn matvec_unchecked(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matmul", self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), orow);
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_diag(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += s;
        }
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        check_len("add_assign rows", self.rows, other.rows)?;
        check_len("add_assign cols", self.cols, other.cols)?;
        axpy(1.0, &other.data, &mut self.data);
        Ok(())
    }

    /// Mirrors the upper triangle into the lower one.
    pub fn symmetrize_from_upper(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (oi, i) in rows.enumerate() {
            out.data[oi * out.cols..(oi + 1) * out.cols].copy_from_slice(&self.row(i)[cols.clone()]);
        }
        out
    }
}

/// A square linear map known only through its action on vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec_unchecked(x)
    }
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Relative residual target `||r|| / ||b||`.
    pub tol: f64,
    /// Tikhonov shift added to the operator diagonal.
    pub damping: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            damping: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    /// `||(A + damping I) x - b||_2` for the returned iterate.
    pub residual: f64,
    pub iters: usize,
}

/// Solves `(A + damping I) x = b` by conjugate gradients starting from zero.
///
/// Stops when `||r|| <= tol ||b||` or after `max_iters` iterations and returns
/// the iterate with the smallest recurrence residual seen. A non-finite value
/// or a non-positive `p^T A p` is reported as [`Error::SolverBreakdown`].
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    opts: &CgOptions,
) -> Result<CgSolution> {
    let n = a.dim();
    check_len("conjugate_gradient", n, b.len())?;
    let shifted = |x: &[f64]| {
        let mut y = a.apply(x);
        if opts.damping != 0.0 {
            axpy(opts.damping, x, &mut y);
        }
        y
    };

    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            residual: 0.0,
            iters: 0,
        });
    }
    if !b_norm.is_finite() {
        return Err(Error::SolverBreakdown {
            last_iterate: x,
            iters: 0,
        });
    }

    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs_old = dot(&r, &r);
    let mut best = x.clone();
    let mut best_rnorm = b_norm;
    let mut iters = 0;

    while iters < opts.max_iters {
        let ap = shifted(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::SolverBreakdown {
                last_iterate: best,
                iters,
            });
        }
        let step = rs_old / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        iters += 1;

        let rs_new = dot(&r, &r);
        if !rs_new.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverBreakdown {
                last_iterate: best,
                iters,
            });
        }
        let rnorm = rs_new.sqrt();
        if rnorm < best_rnorm {
            best_rnorm = rnorm;
            best.copy_from_slice(&x);
        }
        if rnorm <= opts.tol * b_norm {
            break;
        }
        let beta = rs_new / rs_old;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs_old = rs_new;
    }

    let mut res = shifted(&best);
    for (ri, bi) in res.iter_mut().zip(b) {
        *ri -= bi;
    }
    Ok(CgSolution {
        x: best,
        residual: norm(&res),
        iters,
    })
}

/// `v^T M v` for a symmetric PSD operator `M`.
pub fn weighted_norm_sq<M: LinearOperator + ?Sized>(v: &[f64], m: &M) -> Result<f64> {
    check_len("weighted_norm_sq", m.dim(), v.len())?;
    Ok(dot(v, &m.apply(v)))
}

/// Largest dimension for which [`is_psd`] uses a full Jacobi eigensolve.
const JACOBI_MAX_DIM: usize = 256;

/// PSD test on the symmetric part of `m`: the smallest eigenvalue (small
/// matrices) or smallest Rayleigh quotient over random probes (large ones)
/// must be at least `-1e-8 * ||m||_F`.
pub fn is_psd(m: &DenseMatrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.rows();
    if n == 0 {
        return true;
    }
    let scale = m.frobenius_norm();
    let threshold = -1e-8 * scale;
    let mut sym = m.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m.get(i, j) + m.get(j, i));
            sym.set(i, j, avg);
            sym.set(j, i, avg);
        }
    }
    if n <= JACOBI_MAX_DIM {
        let eig = symmetric_eigenvalues(&sym);
        return eig.iter().cloned().fold(f64::INFINITY, f64::min) >= threshold;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 * n {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let q = dot(&v, &sym.apply(&v)) / dot(&v, &v);
        if q < threshold {
            return false;
        }
    }
    true
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut a = m.clone();
    let total = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    a.diag()
}
