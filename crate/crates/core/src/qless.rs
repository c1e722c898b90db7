//! Truncated pivoted QR that stores only `R`, the pivots and downdated
//! column norms, plus the projective CUR built from two such runs.

use nalgebra::{DMatrix, DVector};

use crate::accessor::{basis, AdjointView, MatrixAccessor};
use crate::error::{Error, Result};
use crate::linalg::{norm2, C64};
use crate::lowmem::{gather, scatter};
use crate::rng::{argmax, sample_weighted_with, RngState};

/// `R_kk` below this multiple of `||A||_F` ends the factorization early.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-13;

/// Condition estimate of the Gram factors above which `qr_cur` flags the core.
pub const KAPPA_WARN: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrRule {
    Greedy,
    Random,
}

#[derive(Clone, Debug)]
pub struct QlessQrResult {
    /// Upper-triangular `k x k` factor with positive diagonal.
    pub r: DMatrix<C64>,
    pub cols: Vec<usize>,
    /// Downdated squared column norms after the last step.
    pub col_norms: Vec<f64>,
    pub clamped: usize,
    pub rank_deficient: bool,
    pub applies_a: usize,
    pub applies_at: usize,
}

impl QlessQrResult {
    pub fn rank(&self) -> usize {
        self.cols.len()
    }
}

struct Counted<'a, A: ?Sized> {
    a: &'a A,
    applies: usize,
    adjoints: usize,
}

impl<'a, A: MatrixAccessor + ?Sized> Counted<'a, A> {
    fn apply(&mut self, x: &[C64]) -> Result<Vec<C64>> {
        self.applies += 1;
        self.a.apply(x)
    }

    fn adjoint(&mut self, y: &[C64]) -> Result<Vec<C64>> {
        self.adjoints += 1;
        self.a.adjoint_apply(y)
    }
}

/// Solves `R^* y = v` and then `R w = y` for the leading `k x k` block.
fn gram_solves(r: &DMatrix<C64>, k: usize, v: &[C64]) -> Result<(DVector<C64>, DVector<C64>)> {
    let rk = r.view((0, 0), (k, k));
    let y = rk
        .adjoint()
        .solve_lower_triangular(&DVector::from_column_slice(v))
        .ok_or_else(|| Error::Singular("R is singular".into()))?;
    let w = rk
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("R is singular".into()))?;
    Ok((y, w))
}

/// Q-less truncated pivoted QR with two Gram-Schmidt passes per column.
///
/// The orthonormal factor is never formed; `Q = A[:, J] R^{-1}` is applied
/// through triangular solves instead.
pub fn qless_qr<A: MatrixAccessor + ?Sized>(
    a: &A,
    rank: usize,
    rule: QrRule,
    rng: &mut RngState,
) -> Result<QlessQrResult> {
    a.capabilities().require(true, true)?;
    let (n, m) = a.shape();
    if rank > n.min(m) {
        return Err(Error::RankOutOfRange {
            rank,
            max: n.min(m),
        });
    }
    let mut c = a.column_norms()?;
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let fro = c.iter().sum::<f64>().sqrt();
    let mut ops = Counted {
        a,
        applies: 0,
        adjoints: 0,
    };
    let mut r = DMatrix::<C64>::zeros(rank, rank);
    let mut cols: Vec<usize> = Vec::with_capacity(rank);
    let mut clamped = 0;
    let mut rank_deficient = false;

    for k in 0..rank {
        for &j in &cols {
            c[j] = 0.0;
        }
        let pick = match rule {
            QrRule::Greedy => argmax(&c).filter(|&j| c[j] > 0.0),
            QrRule::Random => sample_weighted_with(&c, rng.uniform()),
        };
        let Some(j) = pick else {
            rank_deficient = true;
            break;
        };
        let mut u = ops.apply(&basis(m, j))?;
        let mut coeff = DVector::<C64>::zeros(k);
        if k > 0 {
            for _pass in 0..2 {
                let v = gather(&ops.adjoint(&u)?, &cols);
                let (y, w) = gram_solves(&r, k, &v)?;
                let aw = ops.apply(&scatter(w.as_slice(), &cols, m))?;
                for (ui, x) in u.iter_mut().zip(aw) {
                    *ui -= x;
                }
                coeff += y;
            }
        }
        let rkk = norm2(&u);
        if rkk <= RANK_DEFICIENCY_TOL * fro {
            rank_deficient = true;
            break;
        }
        for t in 0..k {
            r[(t, k)] = coeff[t];
        }
        r[(k, k)] = C64::from(rkk);
        cols.push(j);
        for ui in u.iter_mut() {
            *ui /= rkk;
        }
        let g = ops.adjoint(&u)?;
        for (cj, gj) in c.iter_mut().zip(g) {
            *cj -= gj.norm_sqr();
            if *cj < 0.0 {
                clamped += 1;
                *cj = 0.0;
            }
        }
    }
    for &j in &cols {
        c[j] = 0.0;
    }
    let k = cols.len();
    let r = r.view((0, 0), (k, k)).into_owned();
    Ok(QlessQrResult {
        r,
        cols,
        col_norms: c,
        clamped,
        rank_deficient,
        applies_a: ops.applies,
        applies_at: ops.adjoints,
    })
}

#[derive(Clone, Debug)]
pub struct QrCur {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Projective core `(R1^* R1)^{-1} Z (R2^* R2)^{-1}`.
    pub core: DMatrix<C64>,
    /// Estimated condition numbers of `R1^* R1` and `R2^* R2`.
    pub kappa: (f64, f64),
    pub ill_conditioned: bool,
    pub applies_a: usize,
    pub applies_at: usize,
}

impl QrCur {
    pub fn rank(&self) -> usize {
        self.cols.len()
    }

    /// `A[:, J] U A[I, :] x` with two products with `A`.
    pub fn approx_apply<A: MatrixAccessor + ?Sized>(&self, a: &A, x: &[C64]) -> Result<Vec<C64>> {
        let ax = a.apply(x)?;
        let t = &self.core * DVector::from_vec(gather(&ax, &self.rows));
        a.apply(&scatter(t.as_slice(), &self.cols, a.shape().1))
    }

    /// `(A[:, J] U A[I, :])^* y` with two products with `A^*`.
    pub fn approx_adjoint_apply<A: MatrixAccessor + ?Sized>(&self, a: &A, y: &[C64]) -> Result<Vec<C64>> {
        let ay = a.adjoint_apply(y)?;
        let t = self.core.adjoint() * DVector::from_vec(gather(&ay, &self.cols));
        a.adjoint_apply(&scatter(t.as_slice(), &self.rows, a.shape().0))
    }
}

/// Largest and smallest eigenvalue estimates of `R^* R` by five power and
/// five inverse power iterations.
fn gram_condition(r: &DMatrix<C64>) -> f64 {
    let k = r.nrows();
    if k == 0 {
        return 1.0;
    }
    let start = DVector::from_element(k, C64::from(1.0 / (k as f64).sqrt()));
    let mut x = start.clone();
    let mut hi = 0.0;
    for _ in 0..5 {
        let y = r.adjoint() * (r * &x);
        hi = y.norm();
        if hi == 0.0 {
            return f64::INFINITY;
        }
        x = y / C64::from(hi);
    }
    let mut x = start;
    let mut inv_lo = 0.0;
    for _ in 0..5 {
        let Some(y) = r.adjoint().solve_lower_triangular(&x) else {
            return f64::INFINITY;
        };
        let Some(z) = r.solve_upper_triangular(&y) else {
            return f64::INFINITY;
        };
        inv_lo = z.norm();
        if !inv_lo.is_finite() || inv_lo == 0.0 {
            return f64::INFINITY;
        }
        x = z / C64::from(inv_lo);
    }
    hi * inv_lo
}

/// Solves `(R^* R) X = B` column by column.
fn gram_solve_matrix(r: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let y = r
        .adjoint()
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Singular("R is singular".into()))?;
    r.solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("R is singular".into()))
}

/// QR-based CUR with the Frobenius-optimal core for the selected indices.
pub fn qr_cur<A: MatrixAccessor + ?Sized>(a: &A, rank: usize, rule: QrRule, rng: &mut RngState) -> Result<QrCur> {
    let col_qr = qless_qr(a, rank, rule, rng)?;
    let row_qr = qless_qr(&AdjointView::new(a), rank, rule, rng)?;
    let k = col_qr.rank().min(row_qr.rank());
    let cols = col_qr.cols[..k].to_vec();
    let rows = row_qr.cols[..k].to_vec();
    let r1 = col_qr.r.view((0, 0), (k, k)).into_owned();
    let r2 = row_qr.r.view((0, 0), (k, k)).into_owned();
    let (n, _) = a.shape();

    // Z[:, t] = A[:, J]^* A A[I, :]^* e_t
    let mut z = DMatrix::<C64>::zeros(k, k);
    let mut applies_a = col_qr.applies_a + row_qr.applies_at;
    let mut applies_at = col_qr.applies_at + row_qr.applies_a;
    for (t, &i) in rows.iter().enumerate() {
        let x = a.adjoint_apply(&basis(n, i))?;
        let y = a.apply(&x)?;
        let w = a.adjoint_apply(&y)?;
        applies_a += 1;
        applies_at += 2;
        for (s, &j) in cols.iter().enumerate() {
            z[(s, t)] = w[j];
        }
    }
    let left = gram_solve_matrix(&r1, &z)?;
    // U = left (R2^* R2)^{-1}, i.e. U^* = (R2^* R2)^{-1} left^*.
    let core = gram_solve_matrix(&r2, &left.adjoint())?.adjoint();
    let kappa = (gram_condition(&r1), gram_condition(&r2));
    let ill_conditioned = !(kappa.0 <= KAPPA_WARN && kappa.1 <= KAPPA_WARN);
    if core.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(QrCur {
        rows,
        cols,
        core,
        kappa,
        ill_conditioned,
        applies_a,
        applies_at,
    })
}
