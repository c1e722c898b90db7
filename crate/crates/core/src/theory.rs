//! Numerical checks of the expectation bounds and Φ-map dynamics.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::planted_spectrum;
use crate::linalg::{DenseMatrix, C64};
use crate::phi::{phi_map, phi_trace_ratio_limit};
use crate::pivots::{eliminate, expected_onestep_gram, expected_onestep_trace_comparison, PivotRule};
use crate::rng::RngState;
use crate::svd::truncation_error_from_spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Doubling,
    Gram,
    Srplu,
    Phi,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Doubling, Suite::Gram, Suite::Srplu, Suite::Phi];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Doubling => "doubling",
            Suite::Gram => "gram",
            Suite::Srplu => "srplu",
            Suite::Phi => "phi",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{s}` (expected doubling, gram, srplu or phi)")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One measured quantity against its bound; passes when `measured <= bound`.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.bound
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Sizes for the suites; the defaults are the full instance families.
#[derive(Clone, Debug)]
pub struct TheoryOptions {
    pub seed: u64,
    pub doubling_instances: usize,
    pub doubling_trials: usize,
    pub gram_instances: usize,
    pub srplu_instances: usize,
    pub phi_iters: usize,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            doubling_instances: 30,
            doubling_trials: 200,
            gram_instances: 20,
            srplu_instances: 100,
            phi_iters: 500,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &TheoryOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Doubling => doubling_checks(opts)?,
        Suite::Gram => gram_checks(opts)?,
        Suite::Srplu => srplu_checks(opts)?,
        Suite::Phi => phi_checks(opts)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(opts: &TheoryOptions) -> Result<Vec<SuiteReport>> {
    Suite::ALL.into_iter().map(|s| run_suite(s, opts)).collect()
}

pub const DOUBLING_N: usize = 40;
pub const DOUBLING_DECAY: f64 = 0.4;
pub const DOUBLING_MAX_RANK: usize = 8;

/// Monte-Carlo moments of `||A_k||_F^2` for `k = 0..=max_rank` under RPLU.
pub fn rplu_error_moments(a: &DenseMatrix, max_rank: usize, trials: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let mut sum = vec![0.0; max_rank + 1];
    let mut sum_sq = vec![0.0; max_rank + 1];
    for t in 0..trials {
        let mut rng = RngState::new(seed ^ t as u64);
        let tr = eliminate(a, PivotRule::Rplu, max_rank, 0.0, &mut rng)?;
        for k in 0..=max_rank {
            let e = tr.residual_norms.get(k).map_or(0.0, |x| x * x);
            sum[k] += e;
            sum_sq[k] += e * e;
        }
    }
    let t = trials as f64;
    Ok((0..=max_rank)
        .map(|k| {
            let mean = sum[k] / t;
            let var = (sum_sq[k] / t - mean * mean).max(0.0) * t / (t - 1.0).max(1.0);
            (mean, (var / t).sqrt())
        })
        .collect())
}

fn doubling_checks(opts: &TheoryOptions) -> Result<Vec<Check>> {
    let sigma: Vec<f64> = (1..=DOUBLING_N).map(|j| DOUBLING_DECAY.powi(j as i32)).collect();
    let mut rng = RngState::new(opts.seed);
    let mut worst = [f64::NEG_INFINITY; DOUBLING_MAX_RANK + 1];
    let mut worst_track = 0.0f64;
    for inst in 0..opts.doubling_instances {
        let a = planted_spectrum(DOUBLING_N, DOUBLING_N, &sigma, &mut rng)?;
        let moments = rplu_error_moments(&a, DOUBLING_MAX_RANK, opts.doubling_trials, opts.seed.wrapping_add(1 + inst as u64) << 16)?;
        for k in 1..=DOUBLING_MAX_RANK {
            let opt = truncation_error_from_spectrum(&sigma, k).frobenius.powi(2);
            let (mean, se) = moments[k];
            worst[k] = worst[k].max((mean - 3.0 * se) / (4f64.powi(k as i32) * opt));
            if k == DOUBLING_MAX_RANK {
                worst_track = worst_track.max(mean / opt);
            }
        }
    }
    let mut checks: Vec<Check> = (1..=DOUBLING_MAX_RANK)
        .map(|k| Check::new(format!("k={k}: (mean - 3se) / (4^k opt)"), worst[k], 1.0))
        .collect();
    checks.push(Check::new(format!("k={DOUBLING_MAX_RANK}: mean / opt"), worst_track, 100.0));
    Ok(checks)
}

/// Unitary DFT matrix `F_{jk} = exp(-2 pi i jk / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> DenseMatrix {
    let s = 1.0 / (n as f64).sqrt();
    DenseMatrix::from_fn(n, n, |j, k| {
        let t = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        C64::from_polar(s, t)
    })
}

pub const GRAM_ROWS: usize = 6;
pub const GRAM_COLS: usize = 8;

fn twice_phi_gram(a: &DenseMatrix) -> Result<DenseMatrix> {
    let g = a.adjoint().matmul(a);
    Ok(phi_map(&g)?.matrix.scaled(C64::new(2.0, 0.0)))
}

fn gram_checks(opts: &TheoryOptions) -> Result<Vec<Check>> {
    let mut rng = RngState::new(opts.seed);
    let mut worst_rel = 0.0f64;
    let mut worst_eig = f64::NEG_INFINITY;
    for _ in 0..opts.gram_instances {
        let a = DenseMatrix::from_fn(GRAM_ROWS, GRAM_COLS, |_, _| rng.complex_normal());
        let e = expected_onestep_gram(&a)?;
        let b = twice_phi_gram(&a)?;
        worst_rel = worst_rel.max(e.sub(&b).frobenius_norm() / b.frobenius_norm());

        let mut z = DenseMatrix::from_fn(GRAM_ROWS, GRAM_COLS, |_, _| {
            if rng.uniform() < 0.35 {
                C64::new(0.0, 0.0)
            } else {
                rng.complex_normal()
            }
        });
        if z.frobenius_norm_sq() == 0.0 {
            z[(0, 0)] = C64::new(1.0, 0.0);
        }
        let gap = twice_phi_gram(&z)?.sub(&expected_onestep_gram(&z)?);
        let min = gap.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        worst_eig = worst_eig.max(-min);
    }
    let mut checks = vec![
        Check::new("dense: ||E - 2 Phi(A*A)||_F / ||2 Phi(A*A)||_F", worst_rel, 1e-12),
        Check::new("sparse: -min eig(2 Phi(A*A) - E)", worst_eig, 1e-10),
    ];
    for n in [3, 4, 8] {
        let tr = expected_onestep_gram(&dft_matrix(n))?.trace().re;
        checks.push(Check::new(
            format!("dft n={n}: |tr E - 2(n-1)|"),
            (tr - 2.0 * (n as f64 - 1.0)).abs(),
            1e-10,
        ));
    }
    Ok(checks)
}

pub const SRPLU_N: usize = 8;

/// Random `n x n` PSD matrix `G G^*` with `G` of `rank` complex Gaussian columns.
pub fn random_psd(n: usize, rank: usize, rng: &mut RngState) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, rank, |_, _| rng.complex_normal());
    g.matmul(&g.adjoint()).hermitian_part()
}

fn srplu_checks(opts: &TheoryOptions) -> Result<Vec<Check>> {
    let mut rng = RngState::new(opts.seed);
    let mut worst = f64::NEG_INFINITY;
    for inst in 0..opts.srplu_instances {
        let rank = 1 + inst % SRPLU_N;
        let c = random_psd(SRPLU_N, rank, &mut rng);
        let (s, ch) = expected_onestep_trace_comparison(&c)?;
        worst = worst.max(s - ch);
    }
    Ok(vec![Check::new("max (E tr SRPLU - E tr RPCholesky)", worst, 1e-10)])
}

fn phi_checks(opts: &TheoryOptions) -> Result<Vec<Check>> {
    let mut rng = RngState::new(opts.seed);
    let mut checks = Vec::new();
    for r in [2usize, 3, 5] {
        let c = random_psd(8, r, &mut rng);
        let q = phi_trace_ratio_limit(&c, opts.phi_iters)?.last().unwrap_or(0.0);
        checks.push(Check::new(
            format!("rank {r}: |ratio - (1 - 1/r)|"),
            (q - (1.0 - 1.0 / r as f64)).abs(),
            1e-5,
        ));
    }
    let c = DenseMatrix::from_real_diag(&[5.0, 0.5, 0.0, 0.0]);
    let q = phi_trace_ratio_limit(&c, opts.phi_iters)?.last().unwrap_or(0.0);
    checks.push(Check::new("rank-2 family: |ratio - 1/2|", (q - 0.5).abs(), 1e-6));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_is_unitary() {
        let f = dft_matrix(5);
        let g = f.adjoint().matmul(&f);
        assert!(g.sub(&DenseMatrix::identity(5)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        let opts = TheoryOptions {
            doubling_instances: 2,
            doubling_trials: 50,
            gram_instances: 3,
            srplu_instances: 10,
            phi_iters: 100,
            ..TheoryOptions::default()
        };
        for r in run_all(&opts).unwrap() {
            assert!(r.passed(), "{:?}", r);
        }
    }

    #[test]
    fn moments_start_at_frobenius() {
        let a = DenseMatrix::from_real_diag(&[3.0, 4.0]);
        let m = rplu_error_moments(&a, 2, 10, 1).unwrap();
        assert_eq!(m[0], (25.0, 0.0));
        assert_eq!(m[2].0, 0.0);
    }
}
