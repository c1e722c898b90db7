//! Uniform access to dense, sparse and implicit operators.
//!
//! Every algorithm in the crate talks to its input through [`MatrixAccessor`].
//! Implementations advertise what they can do cheaply through
//! [`Capabilities`]; the default methods derive rows, columns, entries and
//! row norms from products with basis vectors when a backend only supplies
//! `apply` / `adjoint_apply`.

use crate::error::{check_len, Error, Result};
use crate::linalg::{conj_vec, norm2_sq, DenseMatrix, C64, ONE, ZERO};

/// Capability flags of a [`MatrixAccessor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub apply: bool,
    pub adjoint_apply: bool,
    pub entry: bool,
    pub row: bool,
    pub column: bool,
    pub row_norms: bool,
}

impl Capabilities {
    pub const ALL: Self = Self {
        apply: true,
        adjoint_apply: true,
        entry: true,
        row: true,
        column: true,
        row_norms: true,
    };

    pub const APPLY_ONLY: Self = Self {
        apply: true,
        adjoint_apply: false,
        entry: false,
        row: false,
        column: false,
        row_norms: false,
    };

    pub fn require(&self, apply: bool, adjoint: bool) -> Result<()> {
        if apply && !self.apply {
            return Err(Error::MissingCapability("apply"));
        }
        if adjoint && !self.adjoint_apply {
            return Err(Error::MissingCapability("adjoint-apply"));
        }
        Ok(())
    }
}

/// Access contract over an `n x m` complex matrix.
///
/// `apply` maps length-`m` vectors to length-`n` vectors; `adjoint_apply`
/// maps length-`n` vectors to length-`m` vectors. Implementations must be
/// safe to call concurrently.
pub trait MatrixAccessor: Send + Sync {
    fn shape(&self) -> (usize, usize);

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    /// `A x`
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>>;

    /// `A^* y`
    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>>;

    /// `A^T y`, derived from the adjoint.
    fn transpose_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        Ok(conj_vec(&self.adjoint_apply(&conj_vec(y))?))
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        let (n, _) = self.shape();
        check_index(i, n)?;
        Ok(self.column(j)?[i])
    }

    /// Row `i` as a length-`m` vector.
    fn row(&self, i: usize) -> Result<Vec<C64>> {
        let (n, _) = self.shape();
        check_index(i, n)?;
        self.capabilities().require(false, true)?;
        self.transpose_apply(&basis(n, i))
    }

    /// Column `j` as a length-`n` vector.
    fn column(&self, j: usize) -> Result<Vec<C64>> {
        let (_, m) = self.shape();
        check_index(j, m)?;
        self.capabilities().require(true, false)?;
        self.apply(&basis(m, j))
    }

    /// Squared Euclidean row norms.
    fn row_norms(&self) -> Result<Vec<f64>> {
        let (n, _) = self.shape();
        (0..n).map(|i| self.row(i).map(|r| norm2_sq(&r))).collect()
    }

    /// Squared Euclidean column norms.
    fn column_norms(&self) -> Result<Vec<f64>> {
        let (_, m) = self.shape();
        (0..m).map(|j| self.column(j).map(|c| norm2_sq(&c))).collect()
    }
}

impl<T: MatrixAccessor + ?Sized> MatrixAccessor for &T {
    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        (**self).apply(x)
    }
    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        (**self).adjoint_apply(y)
    }
    fn transpose_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        (**self).transpose_apply(y)
    }
    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        (**self).entry(i, j)
    }
    fn row(&self, i: usize) -> Result<Vec<C64>> {
        (**self).row(i)
    }
    fn column(&self, j: usize) -> Result<Vec<C64>> {
        (**self).column(j)
    }
    fn row_norms(&self) -> Result<Vec<f64>> {
        (**self).row_norms()
    }
    fn column_norms(&self) -> Result<Vec<f64>> {
        (**self).column_norms()
    }
}

pub(crate) fn check_index(i: usize, len: usize) -> Result<()> {
    if i < len {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("index {i} out of bounds for length {len}")))
    }
}

/// Standard basis vector `e_i` of length `n`.
pub fn basis(n: usize, i: usize) -> Vec<C64> {
    let mut e = vec![ZERO; n];
    e[i] = ONE;
    e
}

impl MatrixAccessor for DenseMatrix {
    fn shape(&self) -> (usize, usize) {
        DenseMatrix::shape(self)
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.ncols(), x.len())?;
        Ok(self.matvec(x))
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.nrows(), y.len())?;
        Ok(self.adjoint_matvec(y))
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        check_index(i, self.nrows())?;
        check_index(j, self.ncols())?;
        Ok(self[(i, j)])
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        check_index(i, self.nrows())?;
        Ok(DenseMatrix::row(self, i).to_vec())
    }

    fn column(&self, j: usize) -> Result<Vec<C64>> {
        check_index(j, self.ncols())?;
        Ok(DenseMatrix::column(self, j))
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        Ok(self.row_norms_sq())
    }
}

/// Compressed sparse row matrix with precomputed row norms.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
    row_norms: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    /// Returns the matrix and the number of duplicate entries merged.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Result<(Self, usize)> {
        for &(i, j, v) in &triplets {
            check_index(i, nrows)?;
            check_index(j, ncols)?;
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut duplicates = 0;
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry exists") += v;
                duplicates += 1;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_norms = (0..nrows)
            .map(|i| norm2_sq(&values[row_ptr[i]..row_ptr[i + 1]]))
            .collect();
        Ok((
            Self {
                nrows,
                ncols,
                row_ptr,
                col_idx,
                values,
                row_norms,
            },
            duplicates,
        ))
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.values[p]))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }
}

impl MatrixAccessor for SparseMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.ncols, x.len())?;
        Ok((0..self.nrows)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|p| self.values[p] * x[self.col_idx[p]])
                    .sum()
            })
            .collect())
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.nrows, y.len())?;
        let mut out = vec![ZERO; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[p]] += self.values[p].conj() * yi;
            }
        }
        Ok(out)
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        check_index(i, self.nrows)?;
        check_index(j, self.ncols)?;
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        Ok(match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => ZERO,
        })
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        check_index(i, self.nrows)?;
        let mut r = vec![ZERO; self.ncols];
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            r[self.col_idx[p]] = self.values[p];
        }
        Ok(r)
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        Ok(self.row_norms.clone())
    }
}

/// The adjoint `A^*` of a borrowed operator.
pub struct AdjointView<'a, A: MatrixAccessor + ?Sized> {
    inner: &'a A,
}

impl<'a, A: MatrixAccessor + ?Sized> AdjointView<'a, A> {
    pub fn new(inner: &'a A) -> Self {
        Self { inner }
    }
}

impl<A: MatrixAccessor + ?Sized> MatrixAccessor for AdjointView<'_, A> {
    fn shape(&self) -> (usize, usize) {
        let (n, m) = self.inner.shape();
        (m, n)
    }

    fn capabilities(&self) -> Capabilities {
        let c = self.inner.capabilities();
        Capabilities {
            apply: c.adjoint_apply,
            adjoint_apply: c.apply,
            entry: c.entry,
            row: c.column,
            column: c.row,
            row_norms: c.apply,
        }
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.inner.adjoint_apply(x)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.inner.apply(y)
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        Ok(self.inner.entry(j, i)?.conj())
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        Ok(conj_vec(&self.inner.column(i)?))
    }

    fn column(&self, j: usize) -> Result<Vec<C64>> {
        Ok(conj_vec(&self.inner.row(j)?))
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        self.inner.column_norms()
    }

    fn column_norms(&self) -> Result<Vec<f64>> {
        self.inner.row_norms()
    }
}

/// Dense materialization through column extraction.
pub fn materialize<A: MatrixAccessor + ?Sized>(a: &A) -> Result<DenseMatrix> {
    let (n, m) = a.shape();
    let mut out = DenseMatrix::zeros(n, m);
    for j in 0..m {
        let col = a.column(j)?;
        check_len(n, col.len())?;
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Exposes only `apply` and `adjoint_apply` of the wrapped accessor, so
/// everything else goes through the default product-based methods.
pub struct MatvecOnly<A>(pub A);

impl<A: MatrixAccessor> MatrixAccessor for MatvecOnly<A> {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            adjoint_apply: true,
            ..Capabilities::APPLY_ONLY
        }
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.0.apply(x)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.0.adjoint_apply(y)
    }
}
