//! Reference decompositions: the dense SVD oracle and a randomized SVD baseline.

use nalgebra::DMatrix;

use crate::accessor::{materialize, MatrixAccessor};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, C64, ZERO};
use crate::rng::RngState;

/// Singular values in nonincreasing order with the matching singular vectors.
///
/// `u` is `n x r` and `v` is `m x r` with `r = min(n, m)`, so that
/// `A = U diag(s) V^*`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        scaled_product(&self.u, &self.singular_values, &self.v)
    }
}

fn scaled_product(u: &DenseMatrix, s: &[f64], v: &DenseMatrix) -> DenseMatrix {
    let us = DenseMatrix::from_fn(u.nrows(), s.len(), |i, j| u[(i, j)] * s[j]);
    us.matmul(&v.adjoint())
}

/// Dense SVD of a materialized matrix. Intended for desk-scale inputs.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let (n, m) = a.shape();
    let r = n.min(m);
    if r == 0 {
        return Ok(SvdResult {
            singular_values: vec![],
            u: DenseMatrix::zeros(n, 0),
            v: DenseMatrix::zeros(m, 0),
        });
    }
    let dec = a
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    let u = dec.u.ok_or_else(|| Error::Decomposition("missing U".into()))?;
    let vt = dec.v_t.ok_or_else(|| Error::Decomposition("missing V^*".into()))?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    Ok(SvdResult {
        singular_values: order.iter().map(|&i| dec.singular_values[i].max(0.0)).collect(),
        u: DenseMatrix::from_fn(n, r, |i, j| u[(i, order[j])]),
        v: DenseMatrix::from_fn(m, r, |i, j| vt[(order[j], i)].conj()),
    })
}

pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut s: Vec<f64> = a.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Optimal rank-`k` approximation errors in the Frobenius and spectral norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationError {
    pub frobenius: f64,
    pub spectral: f64,
}

/// `(sqrt(sum_{j>k} s_j^2), s_{k+1})` by the Eckart-Young-Mirsky theorem.
pub fn truncated_svd_error<A: MatrixAccessor + ?Sized>(a: &A, k: usize) -> Result<TruncationError> {
    let (n, m) = a.shape();
    if k > n.min(m) {
        return Err(Error::RankOutOfRange { rank: k, max: n.min(m) });
    }
    let s = singular_values(&materialize(a)?)?;
    Ok(truncation_error_from_spectrum(&s, k))
}

pub fn truncation_error_from_spectrum(s: &[f64], k: usize) -> TruncationError {
    let tail = s.get(k..).unwrap_or(&[]);
    TruncationError {
        frobenius: tail.iter().map(|x| x * x).sum::<f64>().sqrt(),
        spectral: tail.first().copied().unwrap_or(0.0),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RsvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for RsvdOptions {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 1,
        }
    }
}

/// Rank-`k` factorization `U diag(s) V^*` from the randomized range finder.
#[derive(Clone, Debug)]
pub struct RsvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
    pub applies_a: usize,
    pub applies_at: usize,
}

impl RsvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        scaled_product(&self.u, &self.singular_values, &self.v)
    }
}

/// Randomized SVD with a complex Gaussian sketch of width `l = k + oversample`.
///
/// Uses `l * (1 + power_iters)` products with `A` and the same number with
/// `A^*`, plus one `l x m` dense SVD.
pub fn randomized_svd<A: MatrixAccessor + ?Sized>(
    a: &A,
    k: usize,
    opts: RsvdOptions,
    rng: &mut RngState,
) -> Result<RsvdResult> {
    a.capabilities().require(true, true)?;
    let (n, m) = a.shape();
    let l = k + opts.oversample;
    if l > n.min(m) {
        return Err(Error::RankOutOfRange { rank: l, max: n.min(m) });
    }
    let mut applies_a = 0;
    let mut applies_at = 0;

    let mut y = DMatrix::<C64>::zeros(n, l);
    for j in 0..l {
        let omega: Vec<C64> = (0..m).map(|_| rng.complex_normal()).collect();
        y.set_column(j, &nalgebra::DVector::from_vec(a.apply(&omega)?));
        applies_a += 1;
    }
    let mut q = orthonormal_basis(y);
    for _ in 0..opts.power_iters {
        let mut z = DMatrix::<C64>::zeros(m, l);
        for j in 0..l {
            let col: Vec<C64> = q.column(j).iter().copied().collect();
            z.set_column(j, &nalgebra::DVector::from_vec(a.adjoint_apply(&col)?));
            applies_at += 1;
        }
        let qz = orthonormal_basis(z);
        let mut y = DMatrix::<C64>::zeros(n, l);
        for j in 0..l {
            let col: Vec<C64> = qz.column(j).iter().copied().collect();
            y.set_column(j, &nalgebra::DVector::from_vec(a.apply(&col)?));
            applies_a += 1;
        }
        q = orthonormal_basis(y);
    }

    // B = Q^* A, formed row by row as (A^* q_j)^*.
    let mut b = DenseMatrix::zeros(l, m);
    for j in 0..l {
        let col: Vec<C64> = q.column(j).iter().copied().collect();
        let row = a.adjoint_apply(&col)?;
        applies_at += 1;
        for (dst, v) in b.row_mut(j).iter_mut().zip(row) {
            *dst = v.conj();
        }
    }
    let small = svd(&b)?;
    let qd = DenseMatrix::from_nalgebra(&q);
    let u_small = DenseMatrix::from_fn(l, k, |i, j| small.u[(i, j)]);
    Ok(RsvdResult {
        u: qd.matmul(&u_small),
        singular_values: small.singular_values[..k].to_vec(),
        v: DenseMatrix::from_fn(m, k, |i, j| small.v[(i, j)]),
        applies_a,
        applies_at,
    })
}

fn orthonormal_basis(y: DMatrix<C64>) -> DMatrix<C64> {
    if y.iter().all(|z| *z == ZERO) {
        return y;
    }
    y.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_truncation_error() {
        let a = DenseMatrix::from_real_diag(&[3.0, 2.0, 1.0]);
        let e = truncated_svd_error(&a, 1).unwrap();
        assert!((e.frobenius - 5f64.sqrt()).abs() < 1e-14);
        assert!((e.spectral - 2.0).abs() < 1e-14);
        let full = truncated_svd_error(&a, 3).unwrap();
        assert_eq!((full.frobenius, full.spectral), (0.0, 0.0));
        assert!(matches!(
            truncated_svd_error(&a, 4),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn svd_sorted_and_reconstructs() {
        let mut rng = RngState::new(11);
        let a = DenseMatrix::from_fn(7, 5, |_, _| rng.complex_normal());
        let s = svd(&a).unwrap();
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let err = s.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::NonFinite)));
    }

    #[test]
    fn rsvd_zero_matrix() {
        let a = DenseMatrix::zeros(6, 5);
        let r = randomized_svd(&a, 2, RsvdOptions { oversample: 1, power_iters: 1 }, &mut RngState::new(1)).unwrap();
        assert_eq!(r.reconstruct().frobenius_norm(), 0.0);
    }

    #[test]
    fn rsvd_apply_counts() {
        let mut rng = RngState::new(5);
        let a = DenseMatrix::from_fn(12, 10, |_, _| rng.complex_normal());
        let r = randomized_svd(&a, 3, RsvdOptions { oversample: 2, power_iters: 0 }, &mut rng).unwrap();
        assert_eq!((r.applies_a, r.applies_at), (5, 5));
        let r = randomized_svd(&a, 3, RsvdOptions { oversample: 2, power_iters: 2 }, &mut rng).unwrap();
        assert_eq!((r.applies_a, r.applies_at), (15, 15));
    }
}
