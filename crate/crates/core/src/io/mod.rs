//! Ingestion, emission and synthetic generators.

mod config;
mod generators;
mod mm;
mod tables;

pub use config::{generate, load, load_file, InputSpec, Loaded, RunConfig, ALGORITHMS, GENERATOR_FAMILIES};
pub use generators::{
    gaussian_kernel, gaussian_points, geometric_spectrum, loewner_samples, planted_spectrum, random_orthonormal,
    smiley_points, two_spiral_points, DriftedGaussianToeplitz, SampleDomain, SampleFunction, ToeplitzParams,
};
pub use mm::{
    parse_matrix_market, read_matrix_market, write_matrix_market, write_matrix_market_to, MmField, MmHeader, MmMatrix,
    MmSymmetry,
};
pub use tables::{
    read_dense_binary, read_dense_csv, read_points, read_results, read_results_from, read_samples, write_dense_binary,
    write_dense_csv, write_points, write_results, write_results_to, write_samples, ResultRow, RESULTS_HEADER,
};

use crate::error::Result;
use crate::linalg::{norm2, C64};
use crate::rng::RngState;

/// Outlier gap of the default two-spiral family.
pub const DEFAULT_SPIRAL_GAP: f64 = 0.03;

/// Number of power iterations behind [`spectral_norm_estimate`].
pub const POWER_ITERS: usize = 20;

/// Estimates `||E||_2` for an operator given by `apply` (`m -> n`) and
/// `adjoint` (`n -> m`) with power iteration on `E^* E`.
pub fn spectral_norm_estimate<F, G>(m: usize, apply: F, adjoint: G, iters: usize, rng: &mut RngState) -> Result<f64>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
    G: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut x: Vec<C64> = (0..m).map(|_| rng.complex_normal()).collect();
    let nx = norm2(&x);
    if nx == 0.0 {
        return Ok(0.0);
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let y = apply(&x)?;
        est = norm2(&y);
        if est == 0.0 {
            return Ok(0.0);
        }
        let z = adjoint(&y)?;
        let nz = norm2(&z);
        if nz == 0.0 {
            break;
        }
        x = z.into_iter().map(|v| v / nz).collect();
    }
    Ok(est)
}
