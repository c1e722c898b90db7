//! Seeded synthetic test families.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};

use crate::accessor::{check_index, MatrixAccessor};
use crate::error::{check_len, Error, Result};
use crate::linalg::{DenseMatrix, C64, ZERO};
use crate::rational::SampleSet;
use crate::rng::RngState;

/// `n x k` matrix with orthonormal columns from the QR of a complex Gaussian.
pub fn random_orthonormal(n: usize, k: usize, rng: &mut RngState) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, k, |_, _| rng.complex_normal());
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix the phases so the factor is Haar distributed.
    let mut q = q.columns(0, k).into_owned();
    for j in 0..k {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// `U diag(sigma) V^*` with Haar-random orthonormal `U` (`n x r`) and `V`
/// (`m x r`), `r = sigma.len()`.
pub fn planted_spectrum(n: usize, m: usize, sigma: &[f64], rng: &mut RngState) -> Result<DenseMatrix> {
    let r = sigma.len();
    if r > n.min(m) {
        return Err(Error::RankOutOfRange { rank: r, max: n.min(m) });
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument("singular values must be finite and nonnegative".into()));
    }
    let u = random_orthonormal(n, r, rng);
    let v = random_orthonormal(m, r, rng);
    let mut us = u;
    for (j, s) in sigma.iter().enumerate() {
        for i in 0..n {
            us[(i, j)] *= *s;
        }
    }
    Ok(DenseMatrix::from_nalgebra(&(us * v.adjoint())))
}

/// Square matrix with singular values `rho^j`, `j = 1..=n`.
pub fn geometric_spectrum(n: usize, rho: f64, rng: &mut RngState) -> Result<DenseMatrix> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1)".into()));
    }
    let sigma: Vec<f64> = (1..=n).map(|j| rho.powi(j as i32)).collect();
    planted_spectrum(n, n, &sigma, rng)
}

/// `exp(-||p_i - p_j||^2 / 2)` over the given points.
pub fn gaussian_kernel(points: &[Vec<f64>]) -> Result<DenseMatrix> {
    if let Some(d) = points.first().map(Vec::len) {
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("points differ in dimension".into()));
        }
    }
    let n = points.len();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        C64::from((-0.5 * d2).exp())
    }))
}

/// Standard normal points in `dim` dimensions.
pub fn gaussian_points(n: usize, dim: usize, rng: &mut RngState) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect()
}

fn jitter(rng: &mut RngState, scale: f64) -> C64 {
    C64::new(rng.uniform() - 0.5, rng.uniform() - 0.5) * scale
}

/// A smiley: targets on the face outline, sources on the eyes and the mouth.
pub fn smiley_points(n: usize, m: usize, rng: &mut RngState) -> (Vec<C64>, Vec<C64>) {
    let tau = std::f64::consts::TAU;
    let x = (0..n)
        .map(|i| C64::from_polar(1.0, tau * i as f64 / n as f64) + jitter(rng, 0.01))
        .collect();
    let eyes = m / 4;
    let y = (0..m)
        .map(|j| {
            if j < 2 * eyes {
                let centre = if j < eyes { C64::new(-0.35, 0.35) } else { C64::new(0.35, 0.35) };
                centre + C64::from_polar(0.08 * rng.uniform().sqrt(), tau * rng.uniform())
            } else {
                let t = (j - 2 * eyes) as f64 / (m - 2 * eyes).max(1) as f64;
                let angle = std::f64::consts::PI * (1.15 + 0.7 * t);
                C64::from_polar(0.55, angle) + jitter(rng, 0.02)
            }
        })
        .collect();
    (x, y)
}

/// Two interleaved spiral arms plus `outliers` isolated target/source pairs
/// on a ring of radius 4, each pair `gap` apart.
///
/// Each outlier pair produces one large, nearly decoupled entry; greedy
/// pivoting spends its first steps on these while the spiral cluster holds
/// most of the Frobenius mass.
pub fn two_spiral_points(n: usize, outliers: usize, gap: f64, rng: &mut RngState) -> Result<(Vec<C64>, Vec<C64>)> {
    if outliers > n {
        return Err(Error::InvalidArgument("more outliers than points".into()));
    }
    if !(gap > 0.0) {
        return Err(Error::InvalidArgument("outlier gap must be positive".into()));
    }
    let tau = std::f64::consts::TAU;
    let arm = n - outliers;
    let spiral = |rng: &mut RngState, shift: f64| -> Vec<C64> {
        (0..arm)
            .map(|i| {
                let t = (i as f64 + rng.uniform()) / arm as f64;
                let theta = 2.0 * tau * t;
                C64::from_polar(0.1 + 0.9 * t, theta + shift) + jitter(rng, 0.005)
            })
            .collect()
    };
    let mut x = spiral(rng, 0.0);
    let mut y = spiral(rng, std::f64::consts::PI);
    for k in 0..outliers {
        let phi = tau * (k as f64 + 0.5 * rng.uniform()) / outliers as f64;
        let p = C64::from_polar(4.0, phi);
        x.push(p);
        y.push(p + C64::from_polar(gap, phi));
    }
    Ok((x, y))
}

/// Real Toeplitz matrix `t(i - j)` with
/// `t(d) = weight * exp(-((d h - delta) / sigma)^2 / 2)`, applied through a
/// circulant embedding of length `2n`.
#[derive(Clone)]
pub struct DriftedGaussianToeplitz {
    n: usize,
    /// `t(d)` at index `d + n - 1`.
    t: Vec<f64>,
    prefix: Vec<f64>,
    spectrum: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DriftedGaussianToeplitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftedGaussianToeplitz").field("n", &self.n).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToeplitzParams {
    pub n: usize,
    /// Grid spacing.
    pub h: f64,
    pub delta: f64,
    pub sigma: f64,
    pub weight: f64,
}

impl ToeplitzParams {
    /// The desk-scale analogue of the three-dimensional kernel: span 320,
    /// drift 50 and width 80, rescaled to `span`, on `n` points.
    pub fn scaled(n: usize, span: f64) -> Self {
        Self {
            n,
            h: span / n as f64,
            delta: 50.0 / 320.0 * span,
            sigma: 80.0 / 320.0 * span,
            weight: 1.0,
        }
    }
}

impl DriftedGaussianToeplitz {
    pub fn new(p: ToeplitzParams) -> Result<Self> {
        if p.n == 0 || !(p.h > 0.0) || !(p.sigma > 0.0) || !p.delta.is_finite() || !p.weight.is_finite() {
            return Err(Error::InvalidArgument("invalid Toeplitz parameters".into()));
        }
        let n = p.n;
        let t: Vec<f64> = (0..2 * n - 1)
            .map(|k| {
                let d = k as f64 - (n - 1) as f64;
                let s = (d * p.h - p.delta) / p.sigma;
                p.weight * (-0.5 * s * s).exp()
            })
            .collect();
        let mut prefix = Vec::with_capacity(2 * n);
        prefix.push(0.0);
        for v in &t {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        let len = 2 * n;
        let mut c = vec![ZERO; len];
        for d in 0..n {
            c[d] = C64::from(t[d + n - 1]);
        }
        for d in 1..n {
            c[len - d] = C64::from(t[n - 1 - d]);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        forward.process(&mut c);
        Ok(Self {
            n,
            t,
            prefix,
            spectrum: c,
            forward,
            inverse,
        })
    }

    pub fn symbol(&self, d: isize) -> f64 {
        self.t[(d + self.n as isize - 1) as usize]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| C64::from(self.symbol(i as isize - j as isize)))
    }

    fn convolve(&self, x: &[C64], adjoint: bool) -> Result<Vec<C64>> {
        check_len(self.n, x.len())?;
        let len = 2 * self.n;
        let mut buf = vec![ZERO; len];
        buf[..self.n].copy_from_slice(x);
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= if adjoint { s.conj() } else { *s };
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        buf.truncate(self.n);
        for b in &mut buf {
            *b *= scale;
        }
        Ok(buf)
    }
}

impl MatrixAccessor for DriftedGaussianToeplitz {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.convolve(x, false)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.convolve(y, true)
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        check_index(i, self.n)?;
        check_index(j, self.n)?;
        Ok(C64::from(self.symbol(i as isize - j as isize)))
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        check_index(i, self.n)?;
        Ok((0..self.n).map(|j| C64::from(self.symbol(i as isize - j as isize))).collect())
    }

    fn column(&self, j: usize) -> Result<Vec<C64>> {
        check_index(j, self.n)?;
        Ok((0..self.n).map(|i| C64::from(self.symbol(i as isize - j as isize))).collect())
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        let n = self.n;
        Ok((0..n).map(|i| self.prefix[i + n] - self.prefix[i]).collect())
    }

    fn column_norms(&self) -> Result<Vec<f64>> {
        let n = self.n;
        Ok((0..n).map(|j| self.prefix[2 * n - 1 - j] - self.prefix[n - 1 - j]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFunction {
    /// `1 / (z - 2)`
    InvShift,
    /// `tan(4 z)`
    Tan4,
    Exp,
    /// `tan(20 z^20)`
    Tan20,
}

impl SampleFunction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inv-shift" => Ok(Self::InvShift),
            "tan4" => Ok(Self::Tan4),
            "exp" => Ok(Self::Exp),
            "tan20" => Ok(Self::Tan20),
            other => Err(Error::InvalidArgument(format!(
                "unknown sample function `{other}` (expected inv-shift, tan4, exp or tan20)"
            ))),
        }
    }

    pub fn eval(self, z: C64) -> C64 {
        match self {
            Self::InvShift => 1.0 / (z - 2.0),
            Self::Tan4 => (4.0 * z).tan(),
            Self::Exp => z.exp(),
            Self::Tan20 => (20.0 * z.powu(20)).tan(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleDomain {
    /// Equispaced points on `[-1, 1]`.
    Interval,
    /// Uniform random points on `[-1, 1]`.
    RandomInterval,
    /// Uniform random points in the closed unit disk.
    Disk,
}

impl SampleDomain {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(Self::Interval),
            "random-interval" => Ok(Self::RandomInterval),
            "disk" => Ok(Self::Disk),
            other => Err(Error::InvalidArgument(format!(
                "unknown sample domain `{other}` (expected interval, random-interval or disk)"
            ))),
        }
    }

    pub fn points(self, n: usize, rng: &mut RngState) -> Vec<C64> {
        match self {
            Self::Interval => (0..n)
                .map(|i| C64::from(if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 }))
                .collect(),
            Self::RandomInterval => (0..n).map(|_| C64::from(2.0 * rng.uniform() - 1.0)).collect(),
            Self::Disk => (0..n)
                .map(|_| C64::from_polar(rng.uniform().sqrt(), std::f64::consts::TAU * rng.uniform()))
                .collect(),
        }
    }
}

pub fn loewner_samples(f: SampleFunction, n: usize, domain: SampleDomain, rng: &mut RngState) -> Result<SampleSet> {
    SampleSet::from_fn(domain.points(n, rng), |z| f.eval(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::singular_values;

    #[test]
    fn geometric_spectrum_is_planted() {
        let a = geometric_spectrum(50, 0.4, &mut RngState::new(1)).unwrap();
        let s = singular_values(&a).unwrap();
        for (j, sj) in s.iter().enumerate() {
            assert!((sj - 0.4f64.powi(j as i32 + 1)).abs() <= 1e-10);
        }
    }

    #[test]
    fn generators_are_seeded() {
        let a = geometric_spectrum(8, 0.5, &mut RngState::new(9)).unwrap();
        let b = geometric_spectrum(8, 0.5, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
        let (x1, y1) = two_spiral_points(40, 5, 1e-3, &mut RngState::new(2)).unwrap();
        let (x2, y2) = two_spiral_points(40, 5, 1e-3, &mut RngState::new(2)).unwrap();
        assert_eq!((x1, y1), (x2, y2));
    }

    #[test]
    fn kernel_with_duplicate_point_is_psd() {
        let mut pts = gaussian_points(12, 3, &mut RngState::new(4));
        pts.push(pts[3].clone());
        let k = gaussian_kernel(&pts).unwrap();
        assert_eq!(k.row(3), k.row(12));
        let ev = k.hermitian_eigenvalues();
        assert!(ev[0] >= -1e-12);
    }

    #[test]
    fn toeplitz_fft_matches_dense() {
        let t = DriftedGaussianToeplitz::new(ToeplitzParams::scaled(256, 320.0)).unwrap();
        let d = t.to_dense();
        let mut rng = RngState::new(5);
        let x: Vec<C64> = (0..256).map(|_| rng.complex_normal()).collect();
        let scale = d.frobenius_norm() * crate::linalg::norm2(&x);
        let (fa, da) = (t.apply(&x).unwrap(), d.matvec(&x));
        assert!(fa.iter().zip(&da).all(|(a, b)| (a - b).norm() <= 1e-10 * scale));
        let (fa, da) = (t.adjoint_apply(&x).unwrap(), d.adjoint_matvec(&x));
        assert!(fa.iter().zip(&da).all(|(a, b)| (a - b).norm() <= 1e-10 * scale));
        let rn = t.row_norms().unwrap();
        let cn = t.column_norms().unwrap();
        let dn = d.row_norms_sq();
        let dc = d.adjoint().row_norms_sq();
        for i in 0..256 {
            assert!((rn[i] - dn[i]).abs() <= 1e-12 * dn[i]);
            assert!((cn[i] - dc[i]).abs() <= 1e-12 * dc[i]);
        }
    }

    #[test]
    fn sample_domains() {
        let mut rng = RngState::new(0);
        assert!(SampleDomain::Disk.points(100, &mut rng).iter().all(|z| z.norm() <= 1.0));
        let s = loewner_samples(SampleFunction::InvShift, 10, SampleDomain::Interval, &mut rng).unwrap();
        assert_eq!(s.points[0], C64::from(-1.0));
        assert_eq!(s.values[0], C64::from(-1.0 / 3.0));
    }
}
