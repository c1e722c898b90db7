//! The expected one-step residual map `Phi(C) = C - C^2 / tr(C)` and its iterates.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, C64};

/// Relative eigenvalue threshold below which an eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct PhiOutcome {
    pub matrix: DenseMatrix,
    /// Set when `tr(C) = 0`; the input is returned unchanged.
    pub degenerate: bool,
}

fn check_hermitian(c: &DenseMatrix) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::InvalidArgument("Phi requires a square matrix".into()));
    }
    if !c.is_hermitian(1e-10) {
        return Err(Error::InvalidArgument("Phi requires a Hermitian matrix".into()));
    }
    Ok(())
}

pub fn phi_map(c: &DenseMatrix) -> Result<PhiOutcome> {
    check_hermitian(c)?;
    let tr = c.trace().re;
    if tr == 0.0 {
        return Ok(PhiOutcome {
            matrix: c.clone(),
            degenerate: true,
        });
    }
    let c2 = c.matmul(c);
    let out = c.sub(&c2.scaled(C64::from(1.0 / tr)));
    Ok(PhiOutcome {
        matrix: out.hermitian_part(),
        degenerate: false,
    })
}

/// Consecutive trace ratios `tr Phi^{k+1}(C) / tr Phi^k(C)`.
#[derive(Clone, Debug)]
pub struct TraceRatios {
    pub ratios: Vec<f64>,
    /// First ratio index whose denominator vanished; that ratio and all
    /// later ones are reported as 0.
    pub degenerate_from: Option<usize>,
    /// Numerical rank of `C` used for the iteration.
    pub rank: usize,
}

impl TraceRatios {
    pub fn last(&self) -> Option<f64> {
        self.ratios.last().copied()
    }
}

/// Iterates `Phi` on the spectrum of `C`.
///
/// `Phi` acts on each eigenvalue as `d -> d (1 - d / tr)`, so the iteration
/// runs on the eigenvalues directly. The spectrum is renormalized to unit
/// trace each step (ratios are scale invariant), and eigenvalues below
/// `1e-12 * lambda_max` are set to zero so rounding noise in the null space
/// cannot masquerade as extra rank.
pub fn phi_trace_ratio_limit(c: &DenseMatrix, iters: usize) -> Result<TraceRatios> {
    check_hermitian(c)?;
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let ev = c.hermitian_eigenvalues();
    let max = ev.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut d: Vec<f64> = ev
        .into_iter()
        .map(|x| if x > RANK_TOL * max { x } else { 0.0 })
        .collect();
    let rank = d.iter().filter(|&&x| x > 0.0).count();

    let mut ratios = Vec::with_capacity(iters);
    let mut degenerate_from = None;
    let mut tr: f64 = d.iter().sum();
    for k in 0..iters {
        if tr <= 0.0 {
            degenerate_from.get_or_insert(k);
            ratios.push(0.0);
            continue;
        }
        for x in d.iter_mut() {
            *x /= tr;
        }
        for x in d.iter_mut() {
            *x *= 1.0 - *x;
        }
        let next: f64 = d.iter().sum();
        ratios.push(next);
        tr = next;
    }
    Ok(TraceRatios {
        ratios,
        degenerate_from,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn identity_shrinks() {
        let n = 4;
        let out = phi_map(&DenseMatrix::identity(n)).unwrap();
        let expect = DenseMatrix::identity(n).scaled(C64::from(1.0 - 1.0 / n as f64));
        assert!(close(&out.matrix, &expect, 1e-15));
        assert!(!out.degenerate);
    }

    #[test]
    fn rank_one_annihilated() {
        let out = phi_map(&DenseMatrix::from_real_diag(&[1.0, 0.0])).unwrap();
        assert!(close(&out.matrix, &DenseMatrix::zeros(2, 2), 0.0));
    }

    #[test]
    fn diag_two_one() {
        let out = phi_map(&DenseMatrix::from_real_diag(&[2.0, 1.0])).unwrap();
        let expect = DenseMatrix::from_real_diag(&[2.0 / 3.0, 2.0 / 3.0]);
        assert!(close(&out.matrix, &expect, 1e-15));
    }

    #[test]
    fn zero_matrix_is_fixed_point() {
        let out = phi_map(&DenseMatrix::zeros(3, 3)).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.matrix, DenseMatrix::zeros(3, 3));
        assert!(matches!(
            phi_trace_ratio_limit(&DenseMatrix::zeros(3, 3), 2),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn equal_eigenvalues_give_half() {
        let r = phi_trace_ratio_limit(&DenseMatrix::identity(2), 10).unwrap();
        assert!(r.ratios.iter().all(|&q| (q - 0.5).abs() < 1e-15));
        assert_eq!(r.degenerate_from, None);
    }

    #[test]
    fn rank_one_dies_then_flags() {
        let r = phi_trace_ratio_limit(&DenseMatrix::from_real_diag(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(r.ratios, vec![0.0, 0.0]);
        assert_eq!(r.degenerate_from, Some(1));
    }

    #[test]
    fn diag_three_one_converges() {
        // Scalar oracle: iterate d_i <- d_i (1 - d_i / t) without normalization.
        let mut d = [3.0f64, 1.0];
        let mut last = 0.0;
        for _ in 0..200 {
            let t: f64 = d.iter().sum();
            let next: Vec<f64> = d.iter().map(|x| x * (1.0 - x / t)).collect();
            last = next.iter().sum::<f64>() / t;
            d = [next[0], next[1]];
        }
        let r = phi_trace_ratio_limit(&DenseMatrix::from_real_diag(&[3.0, 1.0]), 200).unwrap();
        assert!((r.last().unwrap() - 0.5).abs() < 1e-6);
        assert!((r.last().unwrap() - last).abs() < 1e-12);
    }

    #[test]
    fn spectral_iteration_matches_matrix_iteration() {
        let mut rng = RngState::new(9);
        let x = DenseMatrix::from_fn(5, 3, |_, _| rng.complex_normal());
        let c = x.matmul(&x.adjoint());
        let r = phi_trace_ratio_limit(&c, 6).unwrap();
        let mut cur = c.clone();
        for k in 0..6 {
            let next = phi_map(&cur).unwrap().matrix;
            let q = next.trace().re / cur.trace().re;
            assert!((q - r.ratios[k]).abs() < 1e-10, "step {k}: {q} vs {}", r.ratios[k]);
            cur = next;
        }
        assert_eq!(r.rank, 3);
    }

    #[test]
    fn phi_is_psd_and_below_input() {
        let mut rng = RngState::new(21);
        for _ in 0..20 {
            let x = DenseMatrix::from_fn(6, 4, |_, _| rng.complex_normal());
            let c = x.matmul(&x.adjoint());
            let p = phi_map(&c).unwrap().matrix;
            let tr = c.trace().re;
            assert!(p.hermitian_eigenvalues()[0] >= -1e-10 * tr);
            assert!(c.sub(&p).hermitian_eigenvalues()[0] >= -1e-10 * tr);
            let expect = tr - c.frobenius_norm_sq() / tr;
            assert!((p.trace().re - expect).abs() < 1e-10 * tr);
        }
    }
}
