//! Dense complex matrices and small vector kernels.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar field used throughout the crate. Real inputs are embedded.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense `n x m` complex matrix stored in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                got: data.len(),
            });
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![ZERO; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::from(diag[i]) } else { ZERO })
    }

    /// Builds a matrix from real row slices; panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self::from_fn(nrows, ncols, |i, j| C64::from(rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.nrows.min(self.ncols)).map(|i| self[(i, i)]).sum()
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| norm2_sq(self.row(i))).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            let out_row = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                axpy(a, other.row(l), out_row);
            }
        }
        out
    }

    /// `A x`
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^* y`
    pub fn adjoint_matvec(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![ZERO; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == ZERO {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * yi;
            }
        }
        out
    }

    /// Submatrix `A(rows, cols)`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |a, b| self[(rows[a], cols[b])])
    }

    /// Subtracts the rank-one matrix `c r^T` in place.
    pub fn rank1_sub(&mut self, c: &[C64], r: &[C64]) {
        assert_eq!(c.len(), self.nrows);
        assert_eq!(r.len(), self.ncols);
        for (i, &ci) in c.iter().enumerate() {
            if ci == ZERO {
                continue;
            }
            axpy(-ci, r, self.row_mut(i));
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|i| {
            (0..=i).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol * scale)
        })
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = self.hermitian_part().to_nalgebra();
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn hermitian_part(&self) -> Self {
        assert_eq!(self.nrows, self.ncols);
        Self::from_fn(self.nrows, self.ncols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i * self.ncols + j]
    }
}

/// Conjugated inner product `x^* y`.
pub fn dotc(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2_sq(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2(x: &[C64]) -> f64 {
    norm2_sq(x).sqrt()
}

/// `y += a x`
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn conj_vec(x: &[C64]) -> Vec<C64> {
    x.iter().map(|z| z.conj()).collect()
}

pub fn real_vec(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| C64::from(v)).collect()
}

/// Dense LU with partial pivoting for small square systems.
#[derive(Clone, Debug)]
pub struct SmallLu {
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl SmallLu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("LU requires a square matrix".into()));
        }
        Ok(Self {
            lu: a.to_nalgebra().lu(),
            n: a.nrows(),
        })
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let rhs = nalgebra::DVector::from_column_slice(b);
        self.lu
            .solve(&rhs)
            .map(|x| x.iter().copied().collect())
            .ok_or_else(|| Error::Singular("LU solve hit a zero pivot".into()))
    }
}

/// Two-norm condition number of a small dense matrix (infinite when singular).
pub fn condition_number(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 1.0;
    }
    let sv = a.to_nalgebra().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_and_adjoint_agree_with_matvec() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| C64::new(i as f64 + 1.0, j as f64 - 1.5));
        let x: Vec<C64> = (0..4).map(|k| C64::new(k as f64, 1.0)).collect();
        let xm = DenseMatrix::new(4, 1, x.clone()).unwrap();
        assert_eq!(a.matmul(&xm).as_slice(), a.matvec(&x).as_slice());

        let y: Vec<C64> = (0..3).map(|k| C64::new(1.0, -(k as f64))).collect();
        let ym = DenseMatrix::new(3, 1, y.clone()).unwrap();
        let via_mm = a.adjoint().matmul(&ym);
        for (p, q) in via_mm.as_slice().iter().zip(a.adjoint_matvec(&y)) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn hermitian_eigenvalues_of_diagonal() {
        let d = DenseMatrix::from_real_diag(&[3.0, -1.0, 2.0]);
        let ev = d.hermitian_eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn small_lu_solves() {
        let a = DenseMatrix::from_real_rows(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let x = SmallLu::new(&a).unwrap().solve(&[C64::from(2.0), C64::from(3.0)]).unwrap();
        assert!((x[0] - C64::from(2.0)).norm() < 1e-14);
        assert!((x[1] - C64::from(1.0)).norm() < 1e-14);
    }
}
