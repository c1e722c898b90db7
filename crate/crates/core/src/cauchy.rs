//! Cauchy-like matrices `a_ij = (G[i, :] B[:, j]) / (x_i - y_j)`.
//!
//! Schur complements of a Cauchy-like matrix are Cauchy-like on the same
//! points, so elimination only touches the `n x p` and `p x m` generators.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::accessor::{check_index, MatrixAccessor};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, C64, ZERO};
use crate::rng::{argmax, sample_weighted_with, RngState};
use crate::tree::{certified_upper_bounds, InteractionPlan};

pub const MAX_DISPLACEMENT_RANK: usize = 8;

/// Relative pivot threshold `|a_ij| > PIVOT_TOL * max_j |a_ij|`.
pub const PIVOT_TOL: f64 = 1e-14;

pub const DEFAULT_NU: f64 = 5.0;

/// Proposal cap per step, as a multiple of `nu`, before exact norms are used.
pub const REJECTION_CAP_FACTOR: f64 = 64.0;

#[derive(Clone, Debug)]
pub struct CauchyLikeMatrix {
    x: Vec<C64>,
    y: Vec<C64>,
    p: usize,
    /// `n x p`, column-major.
    g: Vec<C64>,
    /// `p x m`, row-major.
    b: Vec<C64>,
}

impl CauchyLikeMatrix {
    /// `g` is `n x p` column-major and `b` is `p x m` row-major.
    pub fn new(x: Vec<C64>, y: Vec<C64>, p: usize, g: Vec<C64>, b: Vec<C64>) -> Result<Self> {
        if p == 0 || p > MAX_DISPLACEMENT_RANK {
            return Err(Error::InvalidArgument(format!(
                "displacement rank {p} outside 1..={MAX_DISPLACEMENT_RANK}"
            )));
        }
        let (n, m) = (x.len(), y.len());
        crate::error::check_len(n * p, g.len())?;
        crate::error::check_len(p * m, b.len())?;
        if x.iter().chain(&y).chain(&g).chain(&b).any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                if xi == yj {
                    return Err(Error::CoincidentPoints { target: i, src: j });
                }
            }
        }
        Ok(Self { x, y, p, g, b })
    }

    /// The plain Cauchy matrix `1 / (x_i - y_j)`.
    pub fn cauchy(x: Vec<C64>, y: Vec<C64>) -> Result<Self> {
        let (n, m) = (x.len(), y.len());
        Self::new(x, y, 1, vec![C64::from(1.0); n], vec![C64::from(1.0); m])
    }

    pub fn x(&self) -> &[C64] {
        &self.x
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    pub fn displacement_rank(&self) -> usize {
        self.p
    }

    pub fn g(&self) -> &[C64] {
        &self.g
    }

    pub fn b(&self) -> &[C64] {
        &self.b
    }

    pub fn g_at(&self, i: usize, l: usize) -> C64 {
        self.g[l * self.x.len() + i]
    }

    pub fn b_at(&self, l: usize, j: usize) -> C64 {
        self.b[l * self.y.len() + j]
    }

    fn numerator(&self, i: usize, j: usize) -> C64 {
        (0..self.p).map(|l| self.g_at(i, l) * self.b_at(l, j)).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.numerator(i, j) / (self.x[i] - self.y[j])
    }

    pub fn row_vec(&self, i: usize) -> Vec<C64> {
        (0..self.y.len()).map(|j| self.get(i, j)).collect()
    }

    pub fn column_vec(&self, j: usize) -> Vec<C64> {
        (0..self.x.len()).map(|i| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.x.len(), self.y.len(), |i, j| self.get(i, j))
    }

    /// `X A - A Y - G B` on the materialized matrix, relative to `||G B||_F`.
    pub fn displacement_residual(&self) -> f64 {
        let a = self.to_dense();
        let mut err = 0.0;
        let mut scale = 0.0;
        for i in 0..self.x.len() {
            for j in 0..self.y.len() {
                let gb = self.numerator(i, j);
                err += ((self.x[i] - self.y[j]) * a[(i, j)] - gb).norm_sqr();
                scale += gb.norm_sqr();
            }
        }
        if scale == 0.0 {
            err.sqrt()
        } else {
            (err / scale).sqrt()
        }
    }

    /// Eliminates pivot `(i, j)` in place and returns `(column, row, a_ij)`
    /// of the residual before the update.
    pub fn schur_update_in_place(&mut self, i: usize, j: usize) -> Result<(Vec<C64>, Vec<C64>, C64)> {
        check_index(i, self.x.len())?;
        check_index(j, self.y.len())?;
        let r = self.row_vec(i);
        let c = self.column_vec(j);
        let a = r[j];
        let rmax = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(a.norm() > PIVOT_TOL * rmax) || a == ZERO {
            return Err(Error::ZeroPivot { row: i, col: j });
        }
        let (n, m, p) = (self.x.len(), self.y.len(), self.p);
        let gi: Vec<C64> = (0..p).map(|l| self.g_at(i, l)).collect();
        let bj: Vec<C64> = (0..p).map(|l| self.b_at(l, j)).collect();
        for l in 0..p {
            let f = gi[l] / a;
            for (gs, cs) in self.g[l * n..(l + 1) * n].iter_mut().zip(&c) {
                *gs -= cs * f;
            }
            let f = bj[l] / a;
            for (bs, rs) in self.b[l * m..(l + 1) * m].iter_mut().zip(&r) {
                *bs -= rs * f;
            }
        }
        // Row i and column j vanish exactly; pin them against rounding.
        for l in 0..p {
            self.g[l * n + i] = ZERO;
            self.b[l * m + j] = ZERO;
        }
        Ok((c, r, a))
    }

    pub fn certified_bounds(&self, plan: &InteractionPlan) -> Result<Vec<f64>> {
        if plan.targets.points.len() != self.x.len() || plan.sources.points.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                got: plan.targets.points.len(),
            });
        }
        certified_upper_bounds(plan, &self.g, &self.b, self.p)
    }
}

impl MatrixAccessor for CauchyLikeMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        crate::error::check_len(self.y.len(), v.len())?;
        Ok((0..self.x.len())
            .map(|i| (0..self.y.len()).map(|j| self.get(i, j) * v[j]).sum())
            .collect())
    }

    fn adjoint_apply(&self, w: &[C64]) -> Result<Vec<C64>> {
        crate::error::check_len(self.x.len(), w.len())?;
        Ok((0..self.y.len())
            .map(|j| (0..self.x.len()).map(|i| self.get(i, j).conj() * w[i]).sum())
            .collect())
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        check_index(i, self.x.len())?;
        check_index(j, self.y.len())?;
        Ok(self.get(i, j))
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        check_index(i, self.x.len())?;
        Ok(self.row_vec(i))
    }

    fn column(&self, j: usize) -> Result<Vec<C64>> {
        check_index(j, self.y.len())?;
        Ok(self.column_vec(j))
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        Ok(exact_row_norms(self))
    }
}

/// Returns a copy of `m` with pivot `(i, j)` eliminated.
pub fn generator_schur_update(m: &CauchyLikeMatrix, pivot: (usize, usize)) -> Result<CauchyLikeMatrix> {
    let mut out = m.clone();
    out.schur_update_in_place(pivot.0, pivot.1)?;
    Ok(out)
}

/// Squared row norms by direct `O(nmp)` summation.
pub fn exact_row_norms(m: &CauchyLikeMatrix) -> Vec<f64> {
    (0..m.x.len())
        .map(|i| (0..m.y.len()).map(|j| m.get(i, j).norm_sqr()).sum())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructuredRule {
    Rplu,
    C2plu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructuredStop {
    Completed,
    Tolerance,
    ZeroResidual,
}

#[derive(Clone, Debug, Default)]
pub struct StructuredOptions {
    pub rank: usize,
    pub stop_tol: f64,
    /// Keep `(column, row, pivot)` per step for an explicit LU.
    pub record_lu: bool,
}

#[derive(Clone, Debug)]
pub struct StructuredPivotTrace {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub lu_terms: Vec<(Vec<C64>, Vec<C64>, C64)>,
    pub proposals: usize,
    pub acceptances: usize,
    /// Steps where the proposal cap was hit and exact norms were used.
    pub fallbacks: usize,
    /// `max_i u_i` before each step and after the last.
    pub bound_max: Vec<f64>,
    pub stop: StructuredStop,
    /// The residual generators after the last step.
    pub residual: CauchyLikeMatrix,
}

impl StructuredPivotTrace {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// `sum_t c_t r_t / a_t`; requires `record_lu`.
    pub fn approximation(&self, n: usize, m: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(n, m);
        for (c, r, a) in &self.lu_terms {
            let scaled: Vec<C64> = r.iter().map(|z| z / a).collect();
            out.rank1_sub(c, &scaled);
        }
        out.scaled(C64::from(-1.0))
    }
}

/// Structured elimination on the generators.
///
/// With a plan, RPLU rows are drawn by rejection sampling against the
/// certified bounds, which reproduces the squared-row-norm distribution
/// exactly. Without a plan the exact row norms are used, consuming one
/// uniform for the row and one for the column, like the dense path.
pub fn structured_eliminate(
    m: &CauchyLikeMatrix,
    rule: StructuredRule,
    opts: &StructuredOptions,
    plan: Option<&InteractionPlan>,
    rng: &mut RngState,
) -> Result<StructuredPivotTrace> {
    let (n, mm) = m.shape();
    if opts.rank > n.min(mm) {
        return Err(Error::RankOutOfRange {
            rank: opts.rank,
            max: n.min(mm),
        });
    }
    if !(opts.stop_tol >= 0.0) {
        return Err(Error::InvalidArgument("stop_tol must be nonnegative".into()));
    }
    let nu = plan.map_or(1.0, |p| p.nu);
    let cap = (REJECTION_CAP_FACTOR * nu).ceil() as usize;
    let mut res = m.clone();
    let mut trace = StructuredPivotTrace {
        rows: vec![],
        cols: vec![],
        lu_terms: vec![],
        proposals: 0,
        acceptances: 0,
        fallbacks: 0,
        bound_max: vec![],
        stop: StructuredStop::Completed,
        residual: m.clone(),
    };
    let bounds = |r: &CauchyLikeMatrix| -> Result<Vec<f64>> {
        match plan {
            Some(p) => r.certified_bounds(p),
            None => Ok(exact_row_norms(r)),
        }
    };
    let mut u = bounds(&res)?;
    let u0 = u.iter().copied().fold(0.0, f64::max);
    trace.bound_max.push(u0);

    while trace.steps() < opts.rank {
        let umax = *trace.bound_max.last().unwrap();
        if umax <= 0.0 {
            trace.stop = StructuredStop::ZeroResidual;
            break;
        }
        if umax <= opts.stop_tol * opts.stop_tol * u0 {
            trace.stop = StructuredStop::Tolerance;
            break;
        }

        let (i, r) = match rule {
            StructuredRule::C2plu => {
                let i = argmax(&u).expect("nonempty bounds");
                (i, res.row_vec(i))
            }
            StructuredRule::Rplu if plan.is_none() => {
                let i = sample_weighted_with(&u, rng.uniform()).expect("positive bounds");
                (i, res.row_vec(i))
            }
            StructuredRule::Rplu => match rejection_sample(&res, &u, cap, rng, &mut trace) {
                Some(hit) => hit,
                None => {
                    trace.fallbacks += 1;
                    let exact = exact_row_norms(&res);
                    match sample_weighted_with(&exact, rng.uniform()) {
                        Some(i) => (i, res.row_vec(i)),
                        None => {
                            trace.stop = StructuredStop::ZeroResidual;
                            break;
                        }
                    }
                }
            },
        };
        let weights: Vec<f64> = r.iter().map(|z| z.norm_sqr()).collect();
        if weights.iter().all(|&w| w == 0.0) {
            // Only reachable for C2PLU, whose bound can be loose on a dead row.
            u[i] = 0.0;
            if u.iter().all(|&x| x <= 0.0) {
                trace.stop = StructuredStop::ZeroResidual;
                break;
            }
            continue;
        }
        let rmax = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut j = pick_column(rule, &weights, rng);
        if r[j].norm() <= PIVOT_TOL * rmax {
            j = pick_column(rule, &weights, rng);
        }
        let (c, row, a) = res.schur_update_in_place(i, j)?;
        if opts.record_lu {
            trace.lu_terms.push((c, row, a));
        }
        trace.rows.push(i);
        trace.cols.push(j);
        u = bounds(&res)?;
        trace.bound_max.push(u.iter().copied().fold(0.0, f64::max));
    }
    trace.residual = res;
    Ok(trace)
}

fn pick_column(rule: StructuredRule, weights: &[f64], rng: &mut RngState) -> usize {
    match rule {
        StructuredRule::Rplu => sample_weighted_with(weights, rng.uniform()),
        StructuredRule::C2plu => argmax(weights),
    }
    .expect("nonzero row")
}

/// Proposes rows from `u` and accepts with probability `||row||^2 / u_i`.
fn rejection_sample(
    res: &CauchyLikeMatrix,
    u: &[f64],
    cap: usize,
    rng: &mut RngState,
    trace: &mut StructuredPivotTrace,
) -> Option<(usize, Vec<C64>)> {
    for _ in 0..cap {
        let i = sample_weighted_with(u, rng.uniform())?;
        trace.proposals += 1;
        let r = res.row_vec(i);
        let rho: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        if rng.uniform() * u[i] < rho {
            trace.acceptances += 1;
            return Some((i, r));
        }
    }
    None
}

/// Draws one row index by rejection sampling; exposed for distribution tests.
pub fn rejection_sample_row(m: &CauchyLikeMatrix, plan: &InteractionPlan, rng: &mut RngState) -> Result<Option<usize>> {
    let u = m.certified_bounds(plan)?;
    loop {
        let Some(i) = sample_weighted_with(&u, rng.uniform()) else {
            return Ok(None);
        };
        let rho: f64 = m.row_vec(i).iter().map(|z| z.norm_sqr()).sum();
        if rng.uniform() * u[i] < rho {
            return Ok(Some(i));
        }
    }
}

/// Loewner matrix `(fx_i - fy_j) / (x_i - y_j)` as a displacement-rank-2
/// Cauchy-like matrix. The flag is set when all samples vanish and the
/// scaling falls back to 1.
pub fn loewner_build(x: &[C64], fx: &[C64], y: &[C64], fy: &[C64]) -> Result<(CauchyLikeMatrix, bool)> {
    crate::error::check_len(x.len(), fx.len())?;
    crate::error::check_len(y.len(), fy.len())?;
    if fx.iter().chain(fy).any(|z| !z.is_finite()) {
        return Err(Error::NonFinite);
    }
    let fmax = fx.iter().chain(fy).map(|z| z.norm()).fold(0.0, f64::max);
    let (alpha, flagged) = if fmax > 0.0 { (fmax.sqrt(), false) } else { (1.0, true) };
    let (n, m) = (x.len(), y.len());
    let al = C64::from(alpha);
    let mut g = Vec::with_capacity(2 * n);
    g.extend(fx.iter().map(|f| f / al));
    g.extend(std::iter::repeat_n(al, n));
    let mut b = Vec::with_capacity(2 * m);
    b.extend(std::iter::repeat_n(al, m));
    b.extend(fy.iter().map(|f| -f / al));
    Ok((CauchyLikeMatrix::new(x.to_vec(), y.to_vec(), 2, g, b)?, flagged))
}

/// `V = A F` with `A` Cauchy-like and `F` a unitary DFT, where `V` is the
/// Vandermonde matrix `V[j, k] = x_j^k`, `k = 0..cols`.
///
/// The nodes are the roots of unity `lambda_s = exp(2 pi i s / n)`, the row
/// generator is `x_j^n - 1` and the column generator `lambda_s / sqrt(n)`.
/// `F[s, k] = lambda_s^k / sqrt(n)`, so `F v` is an inverse FFT.
#[derive(Clone)]
pub struct VandermondeFactor {
    pub cauchy: CauchyLikeMatrix,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for VandermondeFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VandermondeFactor").field("cauchy", &self.cauchy).finish()
    }
}

/// Minimum distance from a point to a node before conversion is refused.
pub const NODE_CLEARANCE: f64 = 1e-12;

pub fn vandermonde_to_cauchy(x: &[C64], cols: usize) -> Result<VandermondeFactor> {
    if cols == 0 || x.is_empty() {
        return Err(Error::InvalidArgument("Vandermonde needs points and at least one column".into()));
    }
    let n = cols;
    let nodes: Vec<C64> = (0..n)
        .map(|s| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * s as f64 / n as f64))
        .collect();
    for (j, xj) in x.iter().enumerate() {
        for (s, ls) in nodes.iter().enumerate() {
            if (xj - ls).norm() <= NODE_CLEARANCE {
                return Err(Error::CoincidentPoints { target: j, src: s });
            }
        }
    }
    let g: Vec<C64> = x.iter().map(|z| z.powu(n as u32) - 1.0).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let b: Vec<C64> = nodes.iter().map(|l| l * scale).collect();
    let cauchy = CauchyLikeMatrix::new(x.to_vec(), nodes, 1, g, b)?;
    let mut planner = FftPlanner::new();
    Ok(VandermondeFactor {
        cauchy,
        inverse: planner.plan_fft_inverse(n),
        forward: planner.plan_fft_forward(n),
    })
}

impl VandermondeFactor {
    pub fn cols(&self) -> usize {
        self.cauchy.y().len()
    }

    /// `F v`.
    pub fn dft_apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        crate::error::check_len(self.cols(), v.len())?;
        let mut buf = v.to_vec();
        self.inverse.process(&mut buf);
        let s = 1.0 / (self.cols() as f64).sqrt();
        Ok(buf.into_iter().map(|z| z * s).collect())
    }

    /// `F^* v`.
    pub fn dft_adjoint_apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        crate::error::check_len(self.cols(), v.len())?;
        let mut buf = v.to_vec();
        self.forward.process(&mut buf);
        let s = 1.0 / (self.cols() as f64).sqrt();
        Ok(buf.into_iter().map(|z| z * s).collect())
    }

    /// Dense `V` reconstituted as `A F`.
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        let a = self.cauchy.to_dense();
        let (m, n) = a.shape();
        let mut out = DenseMatrix::zeros(m, n);
        for j in 0..m {
            // Row j of A F is (F^T a_j^T)^T and F is symmetric.
            let row = self.dft_apply(a.row(j))?;
            out.row_mut(j).copy_from_slice(&row);
        }
        Ok(out)
    }
}

impl MatrixAccessor for VandermondeFactor {
    fn shape(&self) -> (usize, usize) {
        self.cauchy.shape()
    }

    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.cauchy.apply(&self.dft_apply(v)?)
    }

    fn adjoint_apply(&self, w: &[C64]) -> Result<Vec<C64>> {
        self.dft_adjoint_apply(&self.cauchy.adjoint_apply(w)?)
    }
}

/// Dense Vandermonde `V[j, k] = x_j^k`.
pub fn vandermonde_dense(x: &[C64], cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(x.len(), cols, |j, k| x[j].powu(k as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_plan;

    fn c(re: f64) -> C64 {
        C64::from(re)
    }

    #[test]
    fn one_by_one_annihilation() {
        let m = CauchyLikeMatrix::new(vec![c(0.0)], vec![c(1.0)], 1, vec![c(1.0)], vec![c(1.0)]).unwrap();
        assert_eq!(exact_row_norms(&m), vec![1.0]);
        let out = generator_schur_update(&m, (0, 0)).unwrap();
        assert_eq!(out.g(), &[ZERO]);
        assert_eq!(out.b(), &[ZERO]);
    }

    #[test]
    fn equidistant_row_norms() {
        let y: Vec<C64> = (0..6).map(|k| C64::from_polar(2.0, k as f64)).collect();
        let m = CauchyLikeMatrix::cauchy(vec![ZERO], y).unwrap();
        assert!((exact_row_norms(&m)[0] - 6.0 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_coincident_and_oversized() {
        assert!(matches!(
            CauchyLikeMatrix::cauchy(vec![c(1.0)], vec![c(1.0)]),
            Err(Error::CoincidentPoints { .. })
        ));
        assert!(CauchyLikeMatrix::new(vec![c(0.0)], vec![c(1.0)], 9, vec![c(1.0); 9], vec![c(1.0); 9]).is_err());
    }

    #[test]
    fn schur_update_matches_dense() {
        let x: Vec<C64> = (0..5).map(|i| c(i as f64)).collect();
        let y: Vec<C64> = (0..5).map(|j| c(j as f64 + 0.5)).collect();
        let m = CauchyLikeMatrix::cauchy(x, y).unwrap();
        let mut dense = m.to_dense();
        let piv = dense[(2, 3)];
        let col = dense.column(3);
        let row: Vec<C64> = dense.row(2).iter().map(|z| z / piv).collect();
        dense.rank1_sub(&col, &row);
        let upd = generator_schur_update(&m, (2, 3)).unwrap();
        let scale = m.to_dense().max_abs();
        let got = upd.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let e = dense[(i, j)];
                assert!((got[(i, j)] - e).norm() <= 1e-10 * e.norm() + 1e-12 * scale);
            }
        }
        assert!(upd.displacement_residual() < 1e-12);
    }

    #[test]
    fn loewner_entries() {
        let (m, flag) = loewner_build(&[c(0.0)], &[c(1.0)], &[c(1.0)], &[c(3.0)]).unwrap();
        assert!(!flag);
        assert!((m.get(0, 0) - 2.0).norm() < 1e-15);
        assert!((m.g_at(0, 1) - 3f64.sqrt()).norm() < 1e-15);
        let x = [c(-1.0), c(0.3)];
        let y = [c(0.5), c(2.0), c(-0.25)];
        let (k, _) = loewner_build(&x, &[c(4.0); 2], &y, &[c(4.0); 3]).unwrap();
        assert!(k.to_dense().max_abs() == 0.0);
        let (id, _) = loewner_build(&x, &x, &y, &y).unwrap();
        assert!(id.to_dense().sub(&DenseMatrix::from_fn(2, 3, |_, _| c(1.0))).max_abs() < 1e-14);
        let (_, zero_flag) = loewner_build(&x, &[ZERO; 2], &y, &[ZERO; 3]).unwrap();
        assert!(zero_flag);
    }

    #[test]
    fn vandermonde_small_cases() {
        let v = vandermonde_to_cauchy(&[c(0.0)], 1).unwrap();
        assert!((v.reconstruct().unwrap()[(0, 0)] - 1.0).norm() < 1e-15);
        let v = vandermonde_to_cauchy(&[c(2.0)], 2).unwrap();
        assert!((v.cauchy.g_at(0, 0) - 3.0).norm() < 1e-15);
        let r = v.reconstruct().unwrap();
        assert!((r[(0, 0)] - 1.0).norm() < 1e-12 && (r[(0, 1)] - 2.0).norm() < 1e-12);
        assert!(vandermonde_to_cauchy(&[c(1.0)], 4).is_err());
    }

    #[test]
    fn vandermonde_jittered_circle() {
        let mut rng = RngState::new(8);
        let x: Vec<C64> = (0..50)
            .map(|k| {
                let base = C64::from_polar(1.3, 2.0 * std::f64::consts::PI * k as f64 / 50.0);
                base + C64::from_polar(0.08 * rng.uniform(), 2.0 * std::f64::consts::PI * rng.uniform())
            })
            .collect();
        let v = vandermonde_to_cauchy(&x, 50).unwrap();
        let dense = vandermonde_dense(&x, 50);
        let err = v.reconstruct().unwrap().sub(&dense).frobenius_norm() / dense.frobenius_norm();
        assert!(err < 1e-9, "{err}");
        let probe: Vec<C64> = (0..50).map(|_| rng.complex_normal()).collect();
        let fast = v.apply(&probe).unwrap();
        let slow = dense.matvec(&probe);
        let diff: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-9 * slow.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }

    #[test]
    fn full_rank_elimination_annihilates() {
        let x: Vec<C64> = (0..6).map(|i| c(i as f64)).collect();
        let y: Vec<C64> = (0..6).map(|j| c(-1.0 - j as f64)).collect();
        let m = CauchyLikeMatrix::cauchy(x.clone(), y.clone()).unwrap();
        let plan = build_plan(&x, &y, 5.0, 2).unwrap();
        let opts = StructuredOptions {
            rank: 6,
            ..Default::default()
        };
        let t = structured_eliminate(&m, StructuredRule::Rplu, &opts, Some(&plan), &mut RngState::new(2)).unwrap();
        assert!(*t.bound_max.last().unwrap() <= 1e-18 * t.bound_max[0]);
    }

    #[test]
    fn lu_terms_reconstruct() {
        let mut rng = RngState::new(3);
        let x: Vec<C64> = (0..12).map(|_| C64::new(rng.uniform(), rng.uniform())).collect();
        let y: Vec<C64> = (0..10).map(|_| C64::new(2.0 + rng.uniform(), rng.uniform())).collect();
        let fx: Vec<C64> = x.iter().map(|z| z.exp()).collect();
        let fy: Vec<C64> = y.iter().map(|z| z.exp()).collect();
        let (m, _) = loewner_build(&x, &fx, &y, &fy).unwrap();
        let opts = StructuredOptions {
            rank: 4,
            record_lu: true,
            ..Default::default()
        };
        let t = structured_eliminate(&m, StructuredRule::C2plu, &opts, None, &mut rng).unwrap();
        let approx = t.approximation(12, 10);
        let err = approx.add(&t.residual.to_dense()).sub(&m.to_dense()).max_abs();
        assert!(err < 1e-10 * m.to_dense().max_abs());
    }
}
