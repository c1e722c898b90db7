//! RPLU and C2PLU in CUR form, driven only by products with `A` and `A^T`.
//!
//! The approximation is kept as `A[:, J] W^{-1} A[I, :]` with `W = A[I, J]`.
//! Besides the `k x k` core only the index sets and a handful of length-`n`
//! and length-`m` work vectors are stored. Each step performs four products
//! with `A` and two with `A^T`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::accessor::{basis, MatrixAccessor};
use crate::error::{Error, Result};
use crate::linalg::{norm2_sq, C64, ZERO};
use crate::rng::{argmax, sample_weighted_with, RngState};

/// Relative threshold on the Schur complement `sigma` below which the
/// explicit-inverse core switches to QR.
pub const CORE_DEGENERATE_TOL: f64 = 1e-12;

/// Fraction of clamped row norms in a single step that triggers a rebuild.
pub const REBUILD_FRACTION: f64 = 0.01;
/// Relative size below which a negative downdated norm counts as rounding.
pub const CLAMP_NOISE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CoreMode {
    /// QR factorization of `W`, recomputed after every extension.
    #[default]
    Qr,
    /// Explicit `W^{-1}` maintained by 2x2 block inversion.
    Inverse,
}

/// The core `U = W^{-1}` of a CUR factorization.
#[derive(Clone, Debug)]
pub struct CoreMatrix {
    mode: CoreMode,
    k: usize,
    w: DMatrix<C64>,
    q: DMatrix<C64>,
    r: DMatrix<C64>,
    inv: DMatrix<C64>,
    fell_back: bool,
}

impl CoreMatrix {
    pub fn new(mode: CoreMode) -> Self {
        Self {
            mode,
            k: 0,
            w: DMatrix::zeros(0, 0),
            q: DMatrix::zeros(0, 0),
            r: DMatrix::zeros(0, 0),
            inv: DMatrix::zeros(0, 0),
            fell_back: false,
        }
    }

    /// Builds a core from a square `W` in one go.
    pub fn from_matrix(w: DMatrix<C64>, mode: CoreMode) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                got: w.ncols(),
            });
        }
        let mut core = Self::new(mode);
        core.k = w.nrows();
        core.w = w;
        match mode {
            CoreMode::Qr => core.refactor(),
            CoreMode::Inverse => {
                core.inv = core
                    .w
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("core matrix is singular".into()))?;
            }
        }
        Ok(core)
    }

    pub fn mode(&self) -> CoreMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.k
    }

    /// Whether an explicit-inverse core had to switch to QR.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    /// `W`, the selected submatrix.
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.w
    }

    fn refactor(&mut self) {
        let qr = self.w.clone().qr();
        self.q = qr.q();
        self.r = qr.r();
    }

    /// Borders `W` with column `w`, row `z` and corner `omega`:
    /// `W' = [[W, w], [z^T, omega]]`.
    pub fn extend(&mut self, w: &[C64], z: &[C64], omega: C64) -> Result<()> {
        let k = self.k;
        if w.len() != k || z.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: if w.len() != k { w.len() } else { z.len() },
            });
        }
        let mut grown = self.w.clone().resize(k + 1, k + 1, ZERO);
        for t in 0..k {
            grown[(t, k)] = w[t];
            grown[(k, t)] = z[t];
        }
        grown[(k, k)] = omega;
        self.w = grown;

        if self.mode == CoreMode::Inverse {
            let wv = DVector::from_column_slice(w);
            let zv = DVector::from_column_slice(z);
            let uw = &self.inv * &wv;
            let zu = self.inv.transpose() * &zv;
            let sigma = omega - zv.dot(&uw);
            let scale = omega.norm() + zv.norm() * uw.norm();
            if sigma.norm() <= CORE_DEGENERATE_TOL * scale || sigma == ZERO {
                self.mode = CoreMode::Qr;
                self.fell_back = true;
                self.inv = DMatrix::zeros(0, 0);
            } else {
                let mut next = DMatrix::zeros(k + 1, k + 1);
                for a in 0..k {
                    for b in 0..k {
                        next[(a, b)] = self.inv[(a, b)] + uw[a] * zu[b] / sigma;
                    }
                    next[(a, k)] = -uw[a] / sigma;
                    next[(k, a)] = -zu[a] / sigma;
                }
                next[(k, k)] = C64::from(1.0) / sigma;
                self.inv = next;
            }
        }
        self.k += 1;
        if self.mode == CoreMode::Qr {
            self.refactor();
        }
        Ok(())
    }

    /// `W^{-1} v`.
    pub fn solve(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.check(v)?;
        if self.k == 0 {
            return Ok(vec![]);
        }
        let v = DVector::from_column_slice(v);
        let x = match self.mode {
            CoreMode::Inverse => &self.inv * v,
            CoreMode::Qr => self
                .r
                .solve_upper_triangular(&(self.q.adjoint() * v))
                .ok_or_else(|| Error::Singular("core matrix is singular".into()))?,
        };
        Ok(x.iter().copied().collect())
    }

    /// `W^{-T} v`.
    pub fn solve_transpose(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.check(v)?;
        if self.k == 0 {
            return Ok(vec![]);
        }
        let v = DVector::from_column_slice(v);
        let x = match self.mode {
            CoreMode::Inverse => self.inv.transpose() * v,
            CoreMode::Qr => {
                // W^T = R^T Q^T and Q^{-T} = conj(Q).
                let y = self
                    .r
                    .transpose()
                    .solve_lower_triangular(&v)
                    .ok_or_else(|| Error::Singular("core matrix is singular".into()))?;
                self.q.conjugate() * y
            }
        };
        Ok(x.iter().copied().collect())
    }

    /// Dense `W^{-1}`; intended for tests and small assemblies.
    pub fn inverse(&self) -> Result<DMatrix<C64>> {
        let mut out = DMatrix::zeros(self.k, self.k);
        for j in 0..self.k {
            let col = self.solve(&basis(self.k, j))?;
            out.set_column(j, &DVector::from_vec(col));
        }
        Ok(out)
    }

    fn check(&self, v: &[C64]) -> Result<()> {
        crate::error::check_len(self.k, v.len())
    }
}

/// Row and column index sets with the core `W^{-1}`.
#[derive(Clone, Debug)]
pub struct CurFactorization {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub core: CoreMatrix,
}

impl CurFactorization {
    pub fn empty(mode: CoreMode) -> Self {
        Self {
            rows: vec![],
            cols: vec![],
            core: CoreMatrix::new(mode),
        }
    }

    /// Builds the factorization for given index sets by reading `W = A[I, J]`.
    pub fn from_indices<A: MatrixAccessor + ?Sized>(
        a: &A,
        rows: Vec<usize>,
        cols: Vec<usize>,
        mode: CoreMode,
    ) -> Result<Self> {
        if rows.len() != cols.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: cols.len(),
            });
        }
        let k = rows.len();
        let mut w = DMatrix::zeros(k, k);
        for (t, &j) in cols.iter().enumerate() {
            let c = a.column(j)?;
            for (s, &i) in rows.iter().enumerate() {
                w[(s, t)] = c[i];
            }
        }
        Ok(Self {
            rows,
            cols,
            core: CoreMatrix::from_matrix(w, mode)?,
        })
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Applies the approximation `C U R` to `x` using two products with `A`.
    pub fn approx_apply<A: MatrixAccessor + ?Sized>(&self, a: &A, x: &[C64]) -> Result<Vec<C64>> {
        let ax = a.apply(x)?;
        let t = self.core.solve(&gather(&ax, &self.rows))?;
        a.apply(&scatter(&t, &self.cols, a.shape().1))
    }

    /// Applies `(C U R)^*` to `y` using two products with `A^*`.
    pub fn approx_adjoint_apply<A: MatrixAccessor + ?Sized>(&self, a: &A, y: &[C64]) -> Result<Vec<C64>> {
        let ay = a.adjoint_apply(y)?;
        // (C U R)^* y = R^* U^* C^* y, and U^* v = conj(W^{-T} conj(v)).
        let cy: Vec<C64> = gather(&ay, &self.cols).iter().map(|z| z.conj()).collect();
        let t: Vec<C64> = self.core.solve_transpose(&cy)?.iter().map(|z| z.conj()).collect();
        a.adjoint_apply(&scatter(&t, &self.rows, a.shape().0))
    }
}

pub(crate) fn gather(v: &[C64], idx: &[usize]) -> Vec<C64> {
    idx.iter().map(|&i| v[i]).collect()
}

pub(crate) fn scatter(v: &[C64], idx: &[usize], len: usize) -> Vec<C64> {
    let mut out = vec![ZERO; len];
    for (&i, &x) in idx.iter().zip(v) {
        out[i] = x;
    }
    out
}

fn transpose_apply<A: MatrixAccessor + ?Sized>(a: &A, y: &[C64]) -> Result<Vec<C64>> {
    let conj: Vec<C64> = y.iter().map(|z| z.conj()).collect();
    Ok(a.adjoint_apply(&conj)?.into_iter().map(|z| z.conj()).collect())
}

/// Column `j` of the residual `A - C U R`, using two products with `A`.
pub fn residual_column<A: MatrixAccessor + ?Sized>(a: &A, fact: &CurFactorization, j: usize) -> Result<Vec<C64>> {
    let (n, m) = a.shape();
    crate::accessor::check_index(j, m)?;
    let c = a.apply(&basis(m, j))?;
    let t = fact.core.solve(&gather(&c, &fact.rows))?;
    let corr = a.apply(&scatter(&t, &fact.cols, m))?;
    debug_assert_eq!(corr.len(), n);
    Ok(c.iter().zip(&corr).map(|(x, y)| x - y).collect())
}

/// Row `i` of the residual `A - C U R` as an `m`-vector, using two products with `A^*`.
pub fn residual_row<A: MatrixAccessor + ?Sized>(a: &A, fact: &CurFactorization, i: usize) -> Result<Vec<C64>> {
    let (n, _) = a.shape();
    crate::accessor::check_index(i, n)?;
    Ok(residual_row_parts(a, fact, i)?.1)
}

/// Returns `(A[i, :], residual row i)`.
fn residual_row_parts<A: MatrixAccessor + ?Sized>(
    a: &A,
    fact: &CurFactorization,
    i: usize,
) -> Result<(Vec<C64>, Vec<C64>)> {
    let n = a.shape().0;
    let r: Vec<C64> = a.adjoint_apply(&basis(n, i))?.into_iter().map(|z| z.conj()).collect();
    let t = fact.core.solve_transpose(&gather(&r, &fact.cols))?;
    let corr = transpose_apply(a, &scatter(&t, &fact.rows, n))?;
    let rhat = r.iter().zip(&corr).map(|(x, y)| x - y).collect();
    Ok((r, rhat))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurRule {
    RpluCur,
    C2pluCur,
}

impl CurRule {
    pub fn name(self) -> &'static str {
        match self {
            Self::RpluCur => "rplu-cur",
            Self::C2pluCur => "c2plu-cur",
        }
    }
}

impl fmt::Display for CurRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rplu-cur" => Ok(Self::RpluCur),
            "c2plu-cur" => Ok(Self::C2pluCur),
            other => Err(Error::InvalidArgument(format!("unknown CUR rule `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurStop {
    Completed,
    Tolerance,
    /// The maintained row norms are all zero.
    ZeroResidual,
    /// A sampled residual row was numerically zero twice in a row.
    DegeneratePivot,
}

#[derive(Clone, Copy, Debug)]
pub struct CurOptions {
    pub rank: usize,
    pub stop_tol: f64,
    pub core_mode: CoreMode,
}

impl CurOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            stop_tol: 0.0,
            core_mode: CoreMode::Qr,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CurBuild {
    pub fact: CurFactorization,
    /// Maintained squared row norms of the final residual.
    pub row_norms: Vec<f64>,
    /// `sum(n_k)` for `k = 0, ..., steps`.
    pub total_history: Vec<f64>,
    /// Row-norm entries clamped to zero over the whole run.
    pub clamped: usize,
    /// Number of full row-norm rebuilds.
    pub rebuilds: usize,
    pub stop: CurStop,
}

/// Runs Alg. "RPLU in CUR form" with the default QR core.
pub fn cur_build<A: MatrixAccessor + ?Sized>(
    a: &A,
    rule: CurRule,
    rank: usize,
    stop_tol: f64,
    rng: &mut RngState,
) -> Result<CurBuild> {
    cur_build_with(
        a,
        rule,
        CurOptions {
            stop_tol,
            ..CurOptions::new(rank)
        },
        rng,
    )
}

pub fn cur_build_with<A: MatrixAccessor + ?Sized>(
    a: &A,
    rule: CurRule,
    opts: CurOptions,
    rng: &mut RngState,
) -> Result<CurBuild> {
    let caps = a.capabilities();
    caps.require(true, true)?;
    if !caps.row_norms {
        return Err(Error::MissingCapability("row-norms"));
    }
    let (n, m) = a.shape();
    if opts.rank > n.min(m) {
        return Err(Error::RankOutOfRange {
            rank: opts.rank,
            max: n.min(m),
        });
    }
    if !(opts.stop_tol >= 0.0) {
        return Err(Error::InvalidArgument("stop_tol must be nonnegative".into()));
    }

    let mut norms = a.row_norms()?;
    if norms.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let total0: f64 = norms.iter().sum();
    let zero_row_tol = 16.0 * f64::EPSILON * norms.iter().copied().fold(0.0, f64::max).sqrt();
    let noise_floor = n as f64 * f64::EPSILON * f64::EPSILON * norms.iter().copied().fold(0.0, f64::max);
    let mut history = Vec::with_capacity(opts.rank + 1);
    history.push(total0);
    let mut fact = CurFactorization::empty(opts.core_mode);
    let mut clamped = 0;
    let mut rebuilds = 0;
    let mut stop = CurStop::Completed;

    while fact.rank() < opts.rank {
        let total = *history.last().unwrap();
        if total <= 0.0 {
            stop = CurStop::ZeroResidual;
            break;
        }
        if total <= opts.stop_tol * opts.stop_tol * total0 {
            stop = CurStop::Tolerance;
            break;
        }

        // Step 1: pivot row, then pivot column from the residual row.
        let mut picked = None;
        for _attempt in 0..2 {
            let i = match rule {
                CurRule::RpluCur => sample_weighted_with(&norms, rng.uniform()),
                CurRule::C2pluCur => argmax(&norms).filter(|&i| norms[i] > 0.0),
            };
            let Some(i) = i else { break };
            let (r, rhat) = residual_row_parts(a, &fact, i)?;
            if rhat.iter().all(|z| z.norm() <= zero_row_tol) {
                norms[i] = 0.0;
                continue;
            }
            picked = Some((i, r, rhat));
            break;
        }
        let Some((i, r, rhat)) = picked else {
            stop = if norms.iter().all(|&x| x <= 0.0) {
                CurStop::ZeroResidual
            } else {
                CurStop::DegeneratePivot
            };
            break;
        };
        let weights: Vec<f64> = rhat.iter().map(|z| z.norm_sqr()).collect();
        let j = match rule {
            CurRule::RpluCur => sample_weighted_with(&weights, rng.uniform()),
            CurRule::C2pluCur => argmax(&weights),
        }
        .expect("nonzero residual row");

        // Step 2: residual column and row-norm downdate.
        let c = a.apply(&basis(m, j))?;
        let t = fact.core.solve(&gather(&c, &fact.rows))?;
        let corr = a.apply(&scatter(&t, &fact.cols, m))?;
        let chat: Vec<C64> = c.iter().zip(&corr).map(|(x, y)| x - y).collect();

        let piv = rhat[j];
        let l: Vec<C64> = rhat.iter().map(|z| z / piv).collect();
        let lnorm = norm2_sq(&l);
        let g = a.apply(&l.iter().map(|z| z.conj()).collect::<Vec<_>>())?;
        let t = fact.core.solve(&gather(&g, &fact.rows))?;
        let v = a.apply(&scatter(&t, &fact.cols, m))?;

        let mut step_clamped = 0;
        let mut step_lost = 0;
        for s in 0..n {
            let cross = ((g[s] - v[s]) * chat[s].conj()).re;
            let fill = lnorm * chat[s].norm_sqr();
            let next = norms[s] - 2.0 * cross + fill;
            norms[s] = if next < 0.0 {
                step_clamped += 1;
                // Negatives within rounding of the terms are noise, not lost accuracy.
                if -next > CLAMP_NOISE * (norms[s] + 2.0 * cross.abs() + fill) + noise_floor {
                    step_lost += 1;
                }
                0.0
            } else {
                next
            };
        }
        norms[i] = 0.0;
        clamped += step_clamped;

        // Step 3: border the core.
        let w = gather(&c, &fact.rows);
        let z = gather(&r, &fact.cols);
        fact.core.extend(&w, &z, c[i])?;
        fact.rows.push(i);
        fact.cols.push(j);

        if step_lost as f64 > REBUILD_FRACTION * n as f64 {
            norms = rebuild_row_norms(a, &fact)?;
            rebuilds += 1;
        }
        history.push(norms.iter().sum());
    }

    Ok(CurBuild {
        fact,
        row_norms: norms,
        total_history: history,
        clamped,
        rebuilds,
        stop,
    })
}

/// Squared row norms of the residual from `m` residual columns.
pub fn rebuild_row_norms<A: MatrixAccessor + ?Sized>(a: &A, fact: &CurFactorization) -> Result<Vec<f64>> {
    let (n, m) = a.shape();
    let mut out = vec![0.0; n];
    for j in 0..m {
        for (o, z) in out.iter_mut().zip(residual_column(a, fact, j)?) {
            *o += z.norm_sqr();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn dm(rows: &[&[f64]]) -> DMatrix<C64> {
        DenseMatrix::from_real_rows(rows).to_nalgebra()
    }

    #[test]
    fn core_extend_two_by_two() {
        for mode in [CoreMode::Inverse, CoreMode::Qr] {
            let mut core = CoreMatrix::new(mode);
            core.extend(&[], &[], C64::from(2.0)).unwrap();
            core.extend(&[C64::from(1.0)], &[C64::from(1.0)], C64::from(1.0)).unwrap();
            let inv = core.inverse().unwrap();
            assert!((inv - dm(&[&[1.0, -1.0], &[-1.0, 2.0]])).norm() < 1e-14, "{mode:?}");
        }
    }

    #[test]
    fn core_from_empty() {
        let mut core = CoreMatrix::new(CoreMode::Inverse);
        core.extend(&[], &[], C64::from(5.0)).unwrap();
        assert!((core.solve(&[C64::from(1.0)]).unwrap()[0] - 0.2).norm() < 1e-16);
    }

    #[test]
    fn inverse_mode_falls_back_on_singular_border() {
        let mut core = CoreMatrix::new(CoreMode::Inverse);
        core.extend(&[], &[], C64::from(1.0)).unwrap();
        core.extend(&[C64::from(1.0)], &[C64::from(1.0)], C64::from(1.0)).unwrap();
        assert!(core.fell_back());
        assert_eq!(core.mode(), CoreMode::Qr);
    }

    #[test]
    fn solve_transpose_matches() {
        let mut rng = RngState::new(2);
        let w = DenseMatrix::from_fn(5, 5, |_, _| rng.complex_normal()).to_nalgebra();
        let v: Vec<C64> = (0..5).map(|_| rng.complex_normal()).collect();
        for mode in [CoreMode::Inverse, CoreMode::Qr] {
            let core = CoreMatrix::from_matrix(w.clone(), mode).unwrap();
            let x = DVector::from_vec(core.solve_transpose(&v).unwrap());
            let back = w.transpose() * x;
            assert!((back - DVector::from_column_slice(&v)).norm() < 1e-10);
        }
    }

    #[test]
    fn diag_two_one_full_rank() {
        let a = DenseMatrix::from_real_diag(&[2.0, 1.0]);
        let out = cur_build(&a, CurRule::RpluCur, 2, 0.0, &mut RngState::new(1)).unwrap();
        let mut rows = out.fact.rows.clone();
        rows.sort();
        assert_eq!(rows, vec![0, 1]);
        assert_eq!(out.fact.rows, out.fact.cols);
        assert!(*out.total_history.last().unwrap() < 1e-28);
    }

    #[test]
    fn residual_interpolates() {
        let mut rng = RngState::new(6);
        let a = DenseMatrix::from_fn(12, 10, |_, _| rng.complex_normal());
        let out = cur_build(&a, CurRule::C2pluCur, 4, 0.0, &mut rng).unwrap();
        for &j in &out.fact.cols {
            let c = residual_column(&a, &out.fact, j).unwrap();
            assert!(norm2_sq(&c).sqrt() < 1e-10 * a.frobenius_norm());
        }
        for &i in &out.fact.rows {
            let r = residual_row(&a, &out.fact, i).unwrap();
            assert!(norm2_sq(&r).sqrt() < 1e-10 * a.frobenius_norm());
        }
        let empty = CurFactorization::empty(CoreMode::Qr);
        assert_eq!(residual_column(&a, &empty, 3).unwrap(), a.column(3));
        assert_eq!(residual_row(&a, &empty, 2).unwrap(), a.row(2).to_vec());
    }

    #[test]
    fn stops_on_rank_one() {
        let u: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let a = DenseMatrix::from_fn(20, 20, |i, j| C64::from(u[i] * u[j].sin()));
        let out = cur_build(&a, CurRule::RpluCur, 5, 1e-12, &mut RngState::new(9)).unwrap();
        assert_eq!(out.fact.rank(), 1);
        assert_ne!(out.stop, CurStop::Completed);
    }

    #[test]
    fn missing_capability_is_reported() {
        struct NoNorms(DenseMatrix);
        impl MatrixAccessor for NoNorms {
            fn shape(&self) -> (usize, usize) {
                self.0.shape()
            }
            fn capabilities(&self) -> crate::accessor::Capabilities {
                crate::accessor::Capabilities::APPLY_ONLY
            }
            fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
                self.0.apply(x)
            }
            fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
                self.0.adjoint_apply(y)
            }
        }
        let a = NoNorms(DenseMatrix::identity(3));
        assert!(matches!(
            cur_build(&a, CurRule::RpluCur, 1, 0.0, &mut RngState::new(0)),
            Err(Error::MissingCapability(_))
        ));
    }
}
