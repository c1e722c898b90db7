//! Sherman-Morrison-Woodbury preconditioning from a CUR factorization, and
//! restarted GMRES.

use crate::accessor::{basis, check_index, MatrixAccessor};
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dotc, norm2, DenseMatrix, SmallLu, C64, ZERO};
use crate::io::{DriftedGaussianToeplitz, ToeplitzParams};
use crate::lowmem::{cur_build, gather, scatter, CurFactorization, CurRule};
use crate::rng::RngState;

/// Condition estimate of `W + G` above which the preconditioner is refused.
pub const KAPPA_MAX: f64 = 1e15;

/// Relative residual reduction over a restart cycle below which GMRES stops.
pub const STAGNATION_TOL: f64 = 1e-14;

/// Applies `P^{-1} = B^{-1} - B^{-1} C (W + G)^{-1} R B^{-1}` for
/// `P = B + C W^{-1} R`, where `C = A[:, J]`, `R = A[I, :]` and
/// `G = R B^{-1} C`. Neither `C` nor `R` is stored.
pub struct SmwPreconditioner<'a, B: ?Sized, A: ?Sized> {
    b_inv: &'a B,
    a: &'a A,
    rows: Vec<usize>,
    cols: Vec<usize>,
    inner: Option<(SmallLu, SmallLu)>,
    g: DenseMatrix,
    kappa: f64,
}

impl<'a, B, A> SmwPreconditioner<'a, B, A>
where
    B: MatrixAccessor + ?Sized,
    A: MatrixAccessor + ?Sized,
{
    pub fn build(b_inv: &'a B, a: &'a A, fact: &CurFactorization) -> Result<Self> {
        let (n, m) = a.shape();
        if n != m || b_inv.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if n != m { m } else { b_inv.shape().0 },
            });
        }
        let k = fact.rank();
        let mut g = DenseMatrix::zeros(k, k);
        for (t, &j) in fact.cols.iter().enumerate() {
            let c = a.apply(&basis(m, j))?;
            let bc = b_inv.apply(&c)?;
            let rbc = gather(&a.apply(&bc)?, &fact.rows);
            for s in 0..k {
                g.as_mut_slice()[s * k + t] = rbc[s];
            }
        }
        let w = fact.core.matrix();
        let inner_m = DenseMatrix::from_fn(k, k, |s, t| w[(s, t)] + g[(s, t)]);
        let kappa = crate::linalg::condition_number(&inner_m);
        if !(kappa <= KAPPA_MAX) {
            return Err(Error::Singular(format!(
                "SMW inner matrix has condition estimate {kappa:.3e}; reduce the rank"
            )));
        }
        let inner = if k > 0 {
            Some((SmallLu::new(&inner_m)?, SmallLu::new(&inner_m.adjoint())?))
        } else {
            None
        };
        Ok(Self {
            b_inv,
            a,
            rows: fact.rows.clone(),
            cols: fact.cols.clone(),
            inner,
            g,
            kappa,
        })
    }

    /// `G = R B^{-1} C`.
    pub fn g(&self) -> &DenseMatrix {
        &self.g
    }

    /// Two-norm condition number of `W + G`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }
}

impl<B, A> MatrixAccessor for SmwPreconditioner<'_, B, A>
where
    B: MatrixAccessor + ?Sized,
    A: MatrixAccessor + ?Sized,
{
    fn shape(&self) -> (usize, usize) {
        self.b_inv.shape()
    }

    fn capabilities(&self) -> crate::accessor::Capabilities {
        crate::accessor::Capabilities {
            apply: true,
            adjoint_apply: true,
            entry: false,
            row: false,
            column: false,
            row_norms: false,
        }
    }

    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let n = self.shape().0;
        check_len(n, v.len())?;
        let mut y = self.b_inv.apply(v)?;
        let Some((lu, _)) = &self.inner else {
            return Ok(y);
        };
        let t = gather(&self.a.apply(&y)?, &self.rows);
        let s = lu.solve(&t)?;
        let z = self.b_inv.apply(&self.a.apply(&scatter(&s, &self.cols, n))?)?;
        axpy(C64::from(-1.0), &z, &mut y);
        Ok(y)
    }

    fn adjoint_apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let n = self.shape().0;
        check_len(n, v.len())?;
        let mut y = self.b_inv.adjoint_apply(v)?;
        let Some((_, lu_adj)) = &self.inner else {
            return Ok(y);
        };
        let t = gather(&self.a.adjoint_apply(&y)?, &self.cols);
        let s = lu_adj.solve(&t)?;
        let z = self
            .b_inv
            .adjoint_apply(&self.a.adjoint_apply(&scatter(&s, &self.rows, n))?)?;
        axpy(C64::from(-1.0), &z, &mut y);
        Ok(y)
    }
}

/// Real tridiagonal matrix with constant diagonals; applies either the
/// matrix or its inverse.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub n: usize,
    pub lower: f64,
    pub diag: f64,
    pub upper: f64,
}

impl Tridiagonal {
    /// `(1 / h^2) tridiag(-1, 2, -1)`, the Dirichlet Laplacian.
    pub fn laplacian(n: usize, h: f64) -> Self {
        let s = 1.0 / (h * h);
        Self {
            n,
            lower: -s,
            diag: 2.0 * s,
            upper: -s,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| {
            C64::from(if i == j {
                self.diag
            } else if i == j + 1 {
                self.lower
            } else if j == i + 1 {
                self.upper
            } else {
                0.0
            })
        })
    }

    fn multiply(&self, x: &[C64], lower: f64, upper: f64) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = x[i] * self.diag;
                if i > 0 {
                    s += x[i - 1] * lower;
                }
                if i + 1 < n {
                    s += x[i + 1] * upper;
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm.
    fn solve_with(&self, d: &[C64], lower: f64, upper: f64) -> Result<Vec<C64>> {
        let n = self.n;
        let mut cp = vec![0.0; n];
        let mut dp = vec![ZERO; n];
        let mut denom = self.diag;
        if denom == 0.0 {
            return Err(Error::Singular("tridiagonal pivot vanished".into()));
        }
        cp[0] = upper / denom;
        dp[0] = d[0] / denom;
        for i in 1..n {
            denom = self.diag - lower * cp[i - 1];
            if denom == 0.0 {
                return Err(Error::Singular("tridiagonal pivot vanished".into()));
            }
            cp[i] = upper / denom;
            dp[i] = (d[i] - dp[i - 1] * lower) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            dp[i] = dp[i] - dp[i + 1] * cp[i];
        }
        Ok(dp)
    }

    pub fn solve(&self, d: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n, d.len())?;
        self.solve_with(d, self.lower, self.upper)
    }

    /// The inverse as an accessor.
    pub fn inverse(&self) -> TridiagonalInverse<'_> {
        TridiagonalInverse(self)
    }
}

impl MatrixAccessor for Tridiagonal {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n, x.len())?;
        Ok(self.multiply(x, self.lower, self.upper))
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n, y.len())?;
        Ok(self.multiply(y, self.upper, self.lower))
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        check_index(i, self.n)?;
        check_index(j, self.n)?;
        Ok(C64::from(if i == j {
            self.diag
        } else if i == j + 1 {
            self.lower
        } else if j == i + 1 {
            self.upper
        } else {
            0.0
        }))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TridiagonalInverse<'a>(&'a Tridiagonal);

impl MatrixAccessor for TridiagonalInverse<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.0.n, self.0.n)
    }

    fn capabilities(&self) -> crate::accessor::Capabilities {
        crate::accessor::Capabilities {
            entry: false,
            row: false,
            column: false,
            row_norms: false,
            ..crate::accessor::Capabilities::ALL
        }
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.0.solve(x)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.0.n, y.len())?;
        self.0.solve_with(y, self.0.upper, self.0.lower)
    }
}

/// `B + A` for two accessors of equal shape.
pub struct SumOperator<'a, B: ?Sized, A: ?Sized> {
    pub b: &'a B,
    pub a: &'a A,
}

impl<B, A> MatrixAccessor for SumOperator<'_, B, A>
where
    B: MatrixAccessor + ?Sized,
    A: MatrixAccessor + ?Sized,
{
    fn shape(&self) -> (usize, usize) {
        self.a.shape()
    }

    fn capabilities(&self) -> crate::accessor::Capabilities {
        crate::accessor::Capabilities::APPLY_ONLY
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let mut y = self.b.apply(x)?;
        axpy(C64::from(1.0), &self.a.apply(x)?, &mut y);
        Ok(y)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        let mut x = self.b.adjoint_apply(y)?;
        axpy(C64::from(1.0), &self.a.adjoint_apply(y)?, &mut x);
        Ok(x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 20,
            tol: 1e-10,
            max_restarts: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresResult {
    pub x: Vec<C64>,
    /// `||K x - b|| / ||b||` at the start and after every inner iteration.
    pub residuals: Vec<f64>,
    /// Residual index at which each restart cycle began.
    pub cycle_starts: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
///
/// Solves `K M^{-1} u = b` and returns `x = M^{-1} u`, so the reported
/// residuals are those of the original system.
pub fn gmres<K, M>(k: &K, b: &[C64], m_inv: Option<&M>, opts: &GmresOptions) -> Result<GmresResult>
where
    K: MatrixAccessor + ?Sized,
    M: MatrixAccessor + ?Sized,
{
    let (n, nc) = k.shape();
    if n != nc {
        return Err(Error::DimensionMismatch { expected: n, got: nc });
    }
    check_len(n, b.len())?;
    if opts.restart == 0 {
        return Err(Error::InvalidArgument("restart must be at least 1".into()));
    }
    let precond = |v: &[C64]| -> Result<Vec<C64>> {
        match m_inv {
            Some(m) => m.apply(v),
            None => Ok(v.to_vec()),
        }
    };
    let bnorm = norm2(b);
    let mut x = vec![ZERO; n];
    let mut out = GmresResult {
        x: vec![],
        residuals: vec![],
        cycle_starts: vec![],
        iterations: 0,
        converged: bnorm == 0.0,
        stagnated: false,
    };
    if bnorm == 0.0 {
        out.residuals.push(0.0);
        out.x = x;
        return Ok(out);
    }

    for _cycle in 0..opts.max_restarts {
        let kx = k.apply(&x)?;
        let r: Vec<C64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
        let beta = norm2(&r);
        let start_res = beta / bnorm;
        out.cycle_starts.push(out.residuals.len());
        out.residuals.push(start_res);
        if start_res <= opts.tol {
            out.converged = true;
            break;
        }
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h: Vec<Vec<C64>> = vec![];
        let mut cs: Vec<(f64, C64)> = vec![];
        let mut g = vec![C64::from(beta)];
        let mut done = false;
        for j in 0..opts.restart {
            let mut w = k.apply(&precond(&v[j])?)?;
            let mut col = vec![ZERO; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dotc(vi, &w);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            let hnext = norm2(&w);
            col[j + 1] = C64::from(hnext);
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = a * c + s * bb;
                col[i + 1] = -s.conj() * a + bb * c;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = col[j] * c + s * col[j + 1];
            col[j + 1] = ZERO;
            g.push(-s.conj() * g[j]);
            g[j] *= c;
            cs.push((c, s));
            h.push(col);
            out.iterations += 1;
            let res = g[j + 1].norm() / bnorm;
            out.residuals.push(res);
            if res <= opts.tol || hnext == 0.0 {
                done = true;
                break;
            }
            v.push(w.iter().map(|z| z / hnext).collect());
        }
        let m = h.len();
        let mut y = vec![ZERO; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for t in i + 1..m {
                s -= h[t][i] * y[t];
            }
            y[i] = s / h[i][i];
        }
        let mut u = vec![ZERO; n];
        for (vi, yi) in v.iter().zip(&y) {
            axpy(*yi, vi, &mut u);
        }
        axpy(C64::from(1.0), &precond(&u)?, &mut x);
        let end_res = *out.residuals.last().expect("nonempty");
        if done {
            // Replace the recurrence estimate by the true residual.
            let kx = k.apply(&x)?;
            let r: Vec<C64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
            let true_res = norm2(&r) / bnorm;
            *out.residuals.last_mut().expect("nonempty") = true_res;
            if true_res <= opts.tol {
                out.converged = true;
                break;
            }
        }
        if (start_res - end_res) / start_res < STAGNATION_TOL {
            out.stagnated = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}

/// Complex Givens rotation `[c s; -conj(s) c]` zeroing `b` in `(a, b)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    if b == ZERO {
        return (1.0, ZERO);
    }
    if a == ZERO {
        return (0.0, b.conj() / b.norm());
    }
    let r = a.norm().hypot(b.norm());
    let c = a.norm() / r;
    let s = (a / a.norm()) * b.conj() / r;
    (c, s)
}

/// Settings for the one-dimensional integro-differential demo on `[0, span]`.
#[derive(Clone, Debug)]
pub struct DemoOptions {
    pub n: usize,
    pub rank: usize,
    pub span: f64,
    /// Kernel width and drift, in the units of `span`.
    pub sigma: f64,
    pub delta: f64,
    /// Relative Frobenius residual at which the CUR build stops before `rank`.
    pub stop_tol: f64,
    pub rule: CurRule,
    pub seed: u64,
    pub gmres: GmresOptions,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            n: 512,
            rank: 32,
            span: 320.0,
            sigma: 10.0,
            delta: 5.0,
            stop_tol: 0.0,
            rule: CurRule::RpluCur,
            seed: 0,
            gmres: GmresOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DemoReport {
    pub unpreconditioned: GmresResult,
    pub preconditioned: GmresResult,
    pub rank: usize,
    pub kappa: f64,
    /// `max |P^{-1} e_j - dense P^{-1} e_j| / max |dense P^{-1}|` over all `j`,
    /// filled in only when `check_dense` is set.
    pub smw_dense_error: Option<f64>,
}

impl DemoReport {
    /// Preconditioned over unpreconditioned iteration counts. When the plain
    /// solve hits its cap the cap is used, so the value is an upper bound.
    pub fn iteration_ratio(&self) -> f64 {
        self.preconditioned.iterations as f64 / self.unpreconditioned.iterations.max(1) as f64
    }
}

/// Solves `(-D2 + A) u = f` with Dirichlet ends, where `D2` is the
/// second-difference Laplacian and `A` the drifted Gaussian integral
/// operator, once without and once with the SMW preconditioner built from a
/// rank-`rank` CUR approximation of `A`.
pub fn precond_demo(opts: &DemoOptions, check_dense: bool) -> Result<DemoReport> {
    let n = opts.n;
    let h = opts.span / (n + 1) as f64;
    let mut p = ToeplitzParams::scaled(n, opts.span);
    p.h = h;
    p.weight = h;
    p.sigma = opts.sigma;
    p.delta = opts.delta;
    let a = DriftedGaussianToeplitz::new(p)?;
    let b = Tridiagonal::laplacian(n, h);
    let b_inv = b.inverse();
    let k = SumOperator { b: &b, a: &a };

    let mut rng = RngState::new(opts.seed);
    let fact = cur_build(&a, opts.rule, opts.rank, opts.stop_tol, &mut rng)?.fact;
    let pre = SmwPreconditioner::build(&b_inv, &a, &fact)?;
    let rhs: Vec<C64> = (0..n).map(|_| C64::new(rng.normal(), 0.0)).collect();

    let unpreconditioned = gmres::<_, DenseMatrix>(&k, &rhs, None, &opts.gmres)?;
    let preconditioned = gmres(&k, &rhs, Some(&pre), &opts.gmres)?;

    let smw_dense_error = if check_dense {
        let mut dense_p = b.to_dense();
        for j in 0..n {
            for (i, z) in fact.approx_apply(&a, &basis(n, j))?.into_iter().enumerate() {
                dense_p[(i, j)] += z;
            }
        }
        let lu = SmallLu::new(&dense_p)?;
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..n {
            let e = basis(n, j);
            let want = lu.solve(&e)?;
            let got = pre.apply(&e)?;
            for (x, y) in want.iter().zip(&got) {
                err = err.max((x - y).norm());
                scale = scale.max(x.norm());
            }
        }
        Some(err / scale)
    } else {
        None
    };

    Ok(DemoReport {
        unpreconditioned,
        preconditioned,
        rank: fact.rank(),
        kappa: pre.kappa(),
        smw_dense_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_vec;
    use crate::lowmem::CoreMode;

    fn identity_inv(n: usize) -> DenseMatrix {
        DenseMatrix::identity(n)
    }

    #[test]
    fn demo_small_converges_faster() {
        let opts = DemoOptions {
            n: 128,
            rank: 16,
            ..DemoOptions::default()
        };
        let r = precond_demo(&opts, true).unwrap();
        assert!(r.preconditioned.converged);
        assert!(r.preconditioned.iterations < r.unpreconditioned.iterations);
        assert!(r.smw_dense_error.unwrap() < 1e-8);
    }

    #[test]
    fn rank_one_identity() {
        let n = 4;
        let mut a = DenseMatrix::zeros(n, n);
        a.as_mut_slice()[0] = C64::from(1.0);
        let binv = identity_inv(n);
        let fact = CurFactorization::from_indices(&a, vec![0], vec![0], CoreMode::Qr).unwrap();
        let p = SmwPreconditioner::build(&binv, &a, &fact).unwrap();
        let y = p.apply(&basis(n, 0)).unwrap();
        assert!((y[0] - 0.5).norm() < 1e-15);
        assert!(y[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn rank_zero_is_b_inverse() {
        let t = Tridiagonal::laplacian(6, 0.5);
        let a = DenseMatrix::identity(6);
        let fact = CurFactorization::empty(CoreMode::Qr);
        let binv = t.inverse();
        let p = SmwPreconditioner::build(&binv, &a, &fact).unwrap();
        let v = real_vec(&[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        assert_eq!(p.apply(&v).unwrap(), t.solve(&v).unwrap());
    }

    #[test]
    fn thomas_matches_dense() {
        let t = Tridiagonal {
            n: 5,
            lower: -1.0,
            diag: 3.0,
            upper: -0.5,
        };
        let v = real_vec(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let x = t.solve(&v).unwrap();
        let back = t.to_dense().matvec(&x);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).norm() < 1e-13));
        let xa = t.inverse().adjoint_apply(&v).unwrap();
        let back = t.to_dense().adjoint_matvec(&xa);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).norm() < 1e-13));
    }

    #[test]
    fn gmres_identity_one_step() {
        let k = DenseMatrix::identity(5);
        let b = real_vec(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let res = gmres::<_, DenseMatrix>(&k, &b, None, &GmresOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.x.iter().zip(&b).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn gmres_diagonal_within_five() {
        let k = DenseMatrix::from_real_diag(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = real_vec(&[1.0; 5]);
        let opts = GmresOptions {
            restart: 5,
            tol: 1e-12,
            max_restarts: 1,
        };
        let res = gmres::<_, DenseMatrix>(&k, &b, None, &opts).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 5);
        for (i, xi) in res.x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).norm() < 1e-10);
        }
    }

    #[test]
    fn residuals_monotone_within_cycle() {
        let t = Tridiagonal::laplacian(60, 1.0);
        let b: Vec<C64> = (0..60).map(|i| C64::new((i as f64).sin(), 0.3)).collect();
        let opts = GmresOptions {
            restart: 10,
            tol: 1e-12,
            max_restarts: 5,
        };
        let res = gmres::<_, DenseMatrix>(&t, &b, None, &opts).unwrap();
        let mut bounds = res.cycle_starts.clone();
        bounds.push(res.residuals.len());
        for w in bounds.windows(2) {
            let cyc = &res.residuals[w[0]..w[1].min(res.residuals.len())];
            assert!(cyc.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)));
        }
    }
}
