//! Dense pivoted eliminations with a materialized residual.
//!
//! Every rule applies rank-1 (or, for SRPLU, rank-2) Schur-complement
//! updates to a dense copy of the input. Randomized rules draw one uniform
//! for the row and then one for the column, so a seeded run here selects the
//! same pivots as the memory-lean CUR path.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{norm2_sq, DenseMatrix, C64, ZERO};
use crate::rng::{argmax, sample_weighted_with, RngState};

/// Relative tolerance on the smallest eigenvalue for PSD inputs.
pub const PSD_TOL: f64 = 1e-8;

/// Default pseudoinverse truncation for SRPLU's 2x2 block.
pub const SRPLU_PINV_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PivotRule {
    Rplu,
    Cplu,
    C2plu,
    RpCholesky,
    GreedyCholesky,
    Srplu,
}

impl PivotRule {
    pub fn is_random(self) -> bool {
        matches!(self, Self::Rplu | Self::RpCholesky | Self::Srplu)
    }

    pub fn requires_psd(self) -> bool {
        matches!(self, Self::RpCholesky | Self::GreedyCholesky | Self::Srplu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rplu => "rplu",
            Self::Cplu => "cplu",
            Self::C2plu => "c2plu",
            Self::RpCholesky => "rpcholesky",
            Self::GreedyCholesky => "greedy-cholesky",
            Self::Srplu => "srplu",
        }
    }
}

impl fmt::Display for PivotRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PivotRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rplu" => Self::Rplu,
            "cplu" => Self::Cplu,
            "c2plu" => Self::C2plu,
            "rpcholesky" => Self::RpCholesky,
            "greedy-cholesky" => Self::GreedyCholesky,
            "srplu" => Self::Srplu,
            other => return Err(Error::InvalidArgument(format!("unknown pivot rule `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// All requested steps were taken.
    Completed,
    /// The residual fell below `stop_tol` relative to the input.
    Tolerance,
    /// The residual became exactly zero.
    ZeroResidual,
}

/// Result of a dense elimination.
///
/// `l` is `n x r` and `u` is `r x m`, where `r` is the number of rank-1
/// terms: one per step, except SRPLU which contributes two per step when
/// `i != j`. For the LU rules column `t` of `l` equals 1 at row `i_t`.
#[derive(Clone, Debug)]
pub struct EliminationTrace {
    pub pivots: Vec<(usize, usize)>,
    pub l: DenseMatrix,
    pub u: DenseMatrix,
    /// Frobenius norms of `A^(0), ..., A^(k)`.
    pub residual_norms: Vec<f64>,
    pub residual: DenseMatrix,
    pub stop: StopReason,
}

impl EliminationTrace {
    pub fn steps(&self) -> usize {
        self.pivots.len()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.pivots.iter().map(|p| p.0).collect()
    }

    pub fn cols(&self) -> Vec<usize> {
        self.pivots.iter().map(|p| p.1).collect()
    }

    /// `L U`, the low-rank approximation.
    pub fn approximation(&self) -> DenseMatrix {
        self.l.matmul(&self.u)
    }
}

/// Checks that `c` is Hermitian with `lambda_min >= -PSD_TOL * tr(c)`.
pub fn validate_psd(c: &DenseMatrix) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            got: c.ncols(),
        });
    }
    let scale = c.max_abs().max(f64::MIN_POSITIVE);
    if !c.is_hermitian(1e-12 * scale) {
        return Err(Error::PsdViolation("matrix is not Hermitian".into()));
    }
    let tr = c.trace().re;
    let min_eig = c.hermitian_eigenvalues().first().copied().unwrap_or(0.0);
    if min_eig < -PSD_TOL * tr.abs() || tr < 0.0 {
        return Err(Error::NotPsd { min_eig, trace: tr });
    }
    Ok(())
}

fn abs_sq_row(row: &[C64]) -> Vec<f64> {
    row.iter().map(|z| z.norm_sqr()).collect()
}

fn diagonal(c: &DenseMatrix) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[(i, i)].re.max(0.0)).collect()
}

/// Draws a pivot from the residual `r` according to `rule`.
fn choose_pivot(r: &DenseMatrix, rule: PivotRule, rng: &mut RngState) -> Option<(usize, usize)> {
    match rule {
        PivotRule::Rplu | PivotRule::Srplu => {
            let i = sample_weighted_with(&r.row_norms_sq(), rng.uniform())?;
            let j = sample_weighted_with(&abs_sq_row(r.row(i)), rng.uniform())?;
            Some((i, j))
        }
        PivotRule::Cplu => {
            let k = argmax(&r.as_slice().iter().map(|z| z.norm()).collect::<Vec<_>>())?;
            Some((k / r.ncols(), k % r.ncols()))
        }
        PivotRule::C2plu => {
            let i = argmax(&r.row_norms_sq())?;
            let j = argmax(&abs_sq_row(r.row(i)))?;
            Some((i, j))
        }
        PivotRule::RpCholesky => {
            let i = sample_weighted_with(&diagonal(r), rng.uniform())?;
            Some((i, i))
        }
        PivotRule::GreedyCholesky => {
            let i = argmax(&diagonal(r))?;
            Some((i, i))
        }
    }
}

/// Runs `steps` pivoted elimination steps on a dense copy of `a`.
///
/// Stops early once `||A^(k)||_F <= stop_tol * ||A||_F` or the residual is
/// exactly zero. A sampled pivot whose value is zero is redrawn once before
/// [`Error::ZeroPivot`] is returned.
pub fn eliminate(
    a: &DenseMatrix,
    rule: PivotRule,
    steps: usize,
    stop_tol: f64,
    rng: &mut RngState,
) -> Result<EliminationTrace> {
    let (n, m) = a.shape();
    if steps > n.min(m) {
        return Err(Error::RankOutOfRange {
            rank: steps,
            max: n.min(m),
        });
    }
    if !(stop_tol >= 0.0) {
        return Err(Error::InvalidArgument("stop_tol must be nonnegative".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    if rule.requires_psd() {
        validate_psd(a)?;
    }

    let mut res = a.clone();
    let norm0 = a.frobenius_norm();
    let mut norms = vec![norm0];
    let mut pivots = Vec::with_capacity(steps);
    let mut lcols: Vec<Vec<C64>> = Vec::new();
    let mut urows: Vec<Vec<C64>> = Vec::new();
    let mut stop = StopReason::Completed;

    for _ in 0..steps {
        let current = *norms.last().unwrap();
        if current == 0.0 {
            stop = StopReason::ZeroResidual;
            break;
        }
        if current <= stop_tol * norm0 {
            stop = StopReason::Tolerance;
            break;
        }
        let Some((i, j)) = draw_nonzero_pivot(&res, rule, rng)? else {
            stop = StopReason::ZeroResidual;
            break;
        };

        if rule == PivotRule::Srplu {
            let (cols, rows) = srplu_terms(&res, (i, j), SRPLU_PINV_TOL)?;
            for (c, r) in cols.iter().zip(&rows) {
                res.rank1_sub(c, r);
            }
            lcols.extend(cols);
            urows.extend(rows);
            res = res.hermitian_part();
        } else {
            let piv = res[(i, j)];
            let c = res.column(j);
            let row = res.row(i).to_vec();
            let scaled: Vec<C64> = row.iter().map(|z| z / piv).collect();
            res.rank1_sub(&c, &scaled);
            for t in 0..m {
                res[(i, t)] = ZERO;
            }
            for t in 0..n {
                res[(t, j)] = ZERO;
            }
            lcols.push(c.iter().map(|z| z / piv).collect());
            urows.push(row);
        }
        pivots.push((i, j));
        norms.push(res.frobenius_norm());
    }
    if stop == StopReason::Completed && pivots.len() < steps {
        stop = StopReason::ZeroResidual;
    }

    let r = lcols.len();
    let l = DenseMatrix::from_fn(n, r, |s, t| lcols[t][s]);
    let u = DenseMatrix::from_fn(r, m, |s, t| urows[s][t]);
    Ok(EliminationTrace {
        pivots,
        l,
        u,
        residual_norms: norms,
        residual: res,
        stop,
    })
}

/// Draws a pivot, redrawing once if a randomized rule lands on a zero entry.
fn draw_nonzero_pivot(
    res: &DenseMatrix,
    rule: PivotRule,
    rng: &mut RngState,
) -> Result<Option<(usize, usize)>> {
    for attempt in 0..2 {
        let Some(p) = choose_pivot(res, rule, rng) else {
            return Ok(None);
        };
        if res[p] != ZERO && res[p].is_finite() {
            return Ok(Some(p));
        }
        if attempt == 1 || !rule.is_random() {
            return Err(Error::ZeroPivot { row: p.0, col: p.1 });
        }
    }
    unreachable!()
}

/// Rank-1 factors `(columns, rows)` whose products sum to `L B^+ L^*`.
fn srplu_terms(c: &DenseMatrix, (i, j): (usize, usize), tol: f64) -> Result<(Vec<Vec<C64>>, Vec<Vec<C64>>)> {
    let idx: Vec<usize> = if i == j { vec![i] } else { vec![i, j] };
    let n = c.nrows();
    let b = c.select(&idx, &idx).to_nalgebra();
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let lmat = DMatrix::from_fn(n, idx.len(), |s, t| c[(s, idx[t])]);
    if smax == 0.0 {
        if lmat.iter().all(|z| *z == ZERO) {
            return Ok((vec![], vec![]));
        }
        return Err(Error::PsdViolation(format!(
            "zero pivot block at ({i}, {j}) with nonzero columns"
        )));
    }
    let pinv = svd
        .pseudo_inverse(tol * smax)
        .map_err(|e| Error::Decomposition(e.to_string()))?;
    // L B^+ L^* = sum_t L[:, t] * (B^+ L^*)[t, :]
    let right = pinv * lmat.adjoint();
    let cols = (0..idx.len())
        .map(|t| lmat.column(t).iter().copied().collect())
        .collect();
    let rows = (0..idx.len())
        .map(|t| right.row(t).iter().copied().collect())
        .collect();
    Ok((cols, rows))
}

/// One SRPLU step `C - L B^+ L^*` with `L = C[:, {i, j}]` and `B = C[{i, j}, {i, j}]`.
pub fn srplu_step(c: &DenseMatrix, pivot: (usize, usize), tol: f64) -> Result<DenseMatrix> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.ncols(),
        });
    }
    for idx in [pivot.0, pivot.1] {
        if idx >= n {
            return Err(Error::InvalidArgument(format!("pivot index {idx} out of range for n = {n}")));
        }
    }
    let (cols, rows) = srplu_terms(c, pivot, tol)?;
    let mut out = c.clone();
    for (col, row) in cols.iter().zip(&rows) {
        out.rank1_sub(col, row);
    }
    Ok(out.hermitian_part())
}

/// Exact `E[A1^* A1]` over the RPLU first-pivot distribution.
pub fn expected_onestep_gram(a: &DenseMatrix) -> Result<DenseMatrix> {
    let total = a.frobenius_norm_sq();
    if total == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (n, m) = a.shape();
    let mut acc = DenseMatrix::zeros(m, m);
    for i in 0..n {
        for j in 0..m {
            let piv = a[(i, j)];
            let p = piv.norm_sqr() / total;
            if p == 0.0 {
                continue;
            }
            let mut r = a.clone();
            let col = a.column(j);
            let row: Vec<C64> = a.row(i).iter().map(|z| z / piv).collect();
            r.rank1_sub(&col, &row);
            let g = r.adjoint().matmul(&r);
            for (dst, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *dst += v * p;
            }
        }
    }
    Ok(acc)
}

/// Exact expected post-step traces `(SRPLU, RPCholesky)` for PSD `C`.
pub fn expected_onestep_trace_comparison(c: &DenseMatrix) -> Result<(f64, f64)> {
    validate_psd(c)?;
    let n = c.nrows();
    let tr = c.trace().re;
    let fro = c.frobenius_norm_sq();
    if tr <= 0.0 || fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut srplu = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = c[(i, j)].norm_sqr() / fro;
            if p > 0.0 {
                srplu += p * srplu_step(c, (i, j), SRPLU_PINV_TOL)?.trace().re;
            }
        }
    }
    let mut chol = 0.0;
    for i in 0..n {
        let d = c[(i, i)].re;
        if d > 0.0 {
            let col = c.column(i);
            // tr(C - c c^* / d) = tr C - ||c||^2 / d
            chol += d / tr * (tr - norm2_sq(&col) / d);
        }
    }
    Ok((srplu, chol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_real_rows(rows)
    }

    #[test]
    fn greedy_cholesky_two_by_two() {
        let a = mat(&[&[4.0, 2.0], &[2.0, 2.0]]);
        let t = eliminate(&a, PivotRule::GreedyCholesky, 1, 0.0, &mut RngState::new(0)).unwrap();
        assert_eq!(t.pivots, vec![(0, 0)]);
        assert!(t.residual.sub(&mat(&[&[0.0, 0.0], &[0.0, 1.0]])).max_abs() < 1e-15);
    }

    #[test]
    fn rplu_on_identity() {
        let t = eliminate(&DenseMatrix::identity(2), PivotRule::Rplu, 2, 0.0, &mut RngState::new(3)).unwrap();
        let mut p = t.pivots.clone();
        p.sort();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(t.residual.frobenius_norm(), 0.0);
    }

    #[test]
    fn cplu_picks_max_entry() {
        let a = mat(&[&[1.0, 3.0], &[2.0, 0.0]]);
        let t = eliminate(&a, PivotRule::Cplu, 1, 0.0, &mut RngState::new(0)).unwrap();
        assert_eq!(t.pivots, vec![(0, 1)]);
    }

    #[test]
    fn c2plu_ties_to_lowest_index() {
        let a = mat(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let t = eliminate(&a, PivotRule::C2plu, 1, 0.0, &mut RngState::new(0)).unwrap();
        assert_eq!(t.pivots, vec![(0, 0)]);
    }

    #[test]
    fn unit_pivot_normalization_and_exactness() {
        let mut rng = RngState::new(17);
        let a = DenseMatrix::from_fn(9, 7, |_, _| rng.complex_normal());
        for rule in [PivotRule::Rplu, PivotRule::Cplu, PivotRule::C2plu] {
            let t = eliminate(&a, rule, 5, 0.0, &mut rng).unwrap();
            for (s, &(i, _)) in t.pivots.iter().enumerate() {
                assert!((t.l[(i, s)] - 1.0).norm() < 1e-14);
            }
            let err = t.approximation().add(&t.residual).sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(err < 1e-10, "{rule}: {err}");
        }
    }

    #[test]
    fn stops_on_zero_residual() {
        let a = DenseMatrix::from_fn(4, 4, |i, j| C64::from((i + 1) as f64 * (j + 1) as f64));
        let t = eliminate(&a, PivotRule::Rplu, 3, 0.0, &mut RngState::new(1)).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.stop, StopReason::ZeroResidual);
    }

    #[test]
    fn stops_on_tolerance() {
        let a = DenseMatrix::from_real_diag(&[1.0, 1e-6, 1e-7]);
        let t = eliminate(&a, PivotRule::Cplu, 3, 1e-5, &mut RngState::new(1)).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.stop, StopReason::Tolerance);
        assert_eq!(t.residual_norms.len(), 2);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(
            eliminate(&a, PivotRule::RpCholesky, 1, 0.0, &mut RngState::new(0)),
            Err(Error::NotPsd { .. })
        ));
        assert!(eliminate(&a, PivotRule::Rplu, 3, 0.0, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn srplu_identity_and_rank_one_cases() {
        let z = srplu_step(&DenseMatrix::identity(2), (0, 1), SRPLU_PINV_TOL).unwrap();
        assert!(z.max_abs() < 1e-15);
        let c = DenseMatrix::from_real_diag(&[2.0, 0.0, 1.0]);
        let out = srplu_step(&c, (0, 0), SRPLU_PINV_TOL).unwrap();
        assert!(out.sub(&DenseMatrix::from_real_diag(&[0.0, 0.0, 1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn srplu_trace_drop_matches_direct() {
        let mut rng = RngState::new(4);
        let x = DenseMatrix::from_fn(6, 6, |_, _| rng.complex_normal());
        let c = x.matmul(&x.adjoint());
        let (i, j) = (1, 4);
        let idx = [i, j];
        let l = DenseMatrix::from_fn(6, 2, |s, t| c[(s, idx[t])]);
        let b = c.select(&idx, &idx);
        let binv = DenseMatrix::from_nalgebra(&b.to_nalgebra().try_inverse().unwrap());
        let drop = l.matmul(&binv).matmul(&l.adjoint()).trace().re;
        let out = srplu_step(&c, (i, j), SRPLU_PINV_TOL).unwrap();
        assert!((c.trace().re - out.trace().re - drop).abs() < 1e-10 * c.trace().re);
    }

    #[test]
    fn srplu_elimination_reconstructs() {
        let mut rng = RngState::new(8);
        let x = DenseMatrix::from_fn(8, 5, |_, _| rng.complex_normal());
        let c = x.matmul(&x.adjoint());
        let t = eliminate(&c, PivotRule::Srplu, 2, 0.0, &mut rng).unwrap();
        let err = t.approximation().add(&t.residual).sub(&c).frobenius_norm() / c.frobenius_norm();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn onestep_gram_on_identity() {
        let g = expected_onestep_gram(&DenseMatrix::identity(2)).unwrap();
        assert!(g.sub(&DenseMatrix::from_real_diag(&[0.5, 0.5])).max_abs() < 1e-15);
        assert!(matches!(expected_onestep_gram(&DenseMatrix::zeros(2, 2)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn trace_comparison_trivial_cases() {
        let (s, c) = expected_onestep_trace_comparison(&DenseMatrix::identity(4)).unwrap();
        assert!((s - 3.0).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
        let (s, c) = expected_onestep_trace_comparison(&mat(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert!(s.abs() < 1e-12 && c.abs() < 1e-12);
    }

    #[test]
    fn rule_names_round_trip() {
        for r in [
            PivotRule::Rplu,
            PivotRule::Cplu,
            PivotRule::C2plu,
            PivotRule::RpCholesky,
            PivotRule::GreedyCholesky,
            PivotRule::Srplu,
        ] {
            assert_eq!(r.name().parse::<PivotRule>().unwrap(), r);
        }
    }
}
