//! Name-based dispatch of the approximation methods and their error metrics.

use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rplu::accessor::{materialize, MatvecOnly};
use rplu::bench::CountingAccessor;
use rplu::cauchy::{structured_eliminate, CauchyLikeMatrix, StructuredOptions, StructuredRule};
use rplu::io::{spectral_norm_estimate, Loaded, ResultRow, POWER_ITERS};
use rplu::linalg::DenseMatrix;
use rplu::lowmem::{cur_build, CurRule};
use rplu::pivots::{eliminate, PivotRule};
use rplu::qless::{qless_qr, QrRule};
use rplu::svd::{randomized_svd, singular_values, truncation_error_from_spectrum, RsvdOptions};
use rplu::tree::build_plan;
use rplu::{MatrixAccessor, RngState, C64};

/// Methods accepted by `sweep`.
pub const SWEEP_METHODS: [&str; 11] = [
    "rplu",
    "cplu",
    "c2plu",
    "rpcholesky",
    "srplu",
    "rplu-cur",
    "c2plu-cur",
    "cpqr",
    "rpqr",
    "rsvd",
    "svd-oracle",
];

/// Methods accepted by `approx` on a matrix input.
pub const MATRIX_METHODS: [&str; 14] = [
    "rplu",
    "cplu",
    "c2plu",
    "rpcholesky",
    "greedy-cholesky",
    "srplu",
    "rplu-cur",
    "c2plu-cur",
    "cpqr",
    "rpqr",
    "rsvd",
    "svd-oracle",
    "cauchy-rplu",
    "cauchy-c2plu",
];

/// How much of the input operator the methods may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    /// Every capability the backend offers.
    Full,
    /// Only products with `A` and `A^*`.
    Matvec,
}

/// A matrix input with the dense reference data used for error metrics.
pub struct MatrixInput {
    op: Box<dyn MatrixAccessor>,
    cauchy: Option<CauchyLikeMatrix>,
    pub dense: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub frobenius: f64,
}

impl MatrixInput {
    pub fn new(loaded: Loaded) -> Result<Self> {
        let (op, cauchy): (Box<dyn MatrixAccessor>, _) = match loaded {
            Loaded::Dense(a) => (Box::new(a), None),
            Loaded::Sparse(a) => (Box::new(a), None),
            Loaded::Toeplitz(a) => (Box::new(a), None),
            Loaded::Cauchy(a) => (Box::new(a.clone()), Some(a)),
            Loaded::Samples(_) => bail!("input is a sample set, not a matrix; use the `aaa` subcommand"),
        };
        let dense = materialize(&*op)?;
        let singular_values = singular_values(&dense)?;
        let frobenius = dense.frobenius_norm();
        Ok(Self {
            op,
            cauchy,
            dense,
            singular_values,
            frobenius,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.dense.shape()
    }

    fn spectral(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

fn pivot_rule(method: &str) -> Option<PivotRule> {
    match method {
        "rplu" | "cplu" | "c2plu" | "rpcholesky" | "greedy-cholesky" | "srplu" => method.parse().ok(),
        _ => None,
    }
}

fn require_entries(op: &dyn MatrixAccessor, method: &str) -> Result<()> {
    if !op.capabilities().entry {
        bail!("method `{method}` needs the `entry` capability, which this input does not provide (loaded with --access matvec)");
    }
    Ok(())
}

/// Runs `method` at `rank` with `seed` and measures its relative errors
/// against the dense reference.
pub fn run_method(input: &MatrixInput, access: Access, method: &str, rank: usize, seed: u64) -> Result<ResultRow> {
    let full: &dyn MatrixAccessor = &*input.op;
    let limited = MatvecOnly(full);
    let op: &dyn MatrixAccessor = match access {
        Access::Full => full,
        Access::Matvec => &limited,
    };
    let counted = CountingAccessor::new(op);
    let (n, m) = input.shape();
    let mut rng = RngState::new(seed);
    let start = Instant::now();

    enum Outcome {
        Residual(DenseMatrix),
        Exact(f64, f64),
    }

    let outcome = if let Some(rule) = pivot_rule(method) {
        require_entries(op, method)?;
        let t = eliminate(&input.dense, rule, rank, 0.0, &mut rng).with_context(|| format!("method `{method}`"))?;
        Outcome::Residual(t.residual)
    } else {
        match method {
            "rplu-cur" | "c2plu-cur" => {
                let rule = if method == "rplu-cur" { CurRule::RpluCur } else { CurRule::C2pluCur };
                let b = cur_build(&counted, rule, rank, 0.0, &mut rng)?;
                let mut approx = DenseMatrix::zeros(n, m);
                let k = b.fact.rank();
                if k > 0 {
                    let mut wr = vec![C64::new(0.0, 0.0); k * m];
                    for c in 0..m {
                        let rhs: Vec<C64> = b.fact.rows.iter().map(|&i| input.dense[(i, c)]).collect();
                        for (s, v) in b.fact.core.solve(&rhs)?.into_iter().enumerate() {
                            wr[s * m + c] = v;
                        }
                    }
                    let cmat = input.dense.select(&(0..n).collect::<Vec<_>>(), &b.fact.cols);
                    approx = cmat.matmul(&DenseMatrix::new(k, m, wr)?);
                }
                Outcome::Residual(input.dense.sub(&approx))
            }
            "cpqr" | "rpqr" => {
                let rule = if method == "cpqr" { QrRule::Greedy } else { QrRule::Random };
                let q = qless_qr(&counted, rank, rule, &mut rng)?;
                Outcome::Residual(project_out(&input.dense, &q.cols))
            }
            "rsvd" => {
                let room = n.min(m).saturating_sub(rank);
                let opts = RsvdOptions {
                    oversample: RsvdOptions::default().oversample.min(room),
                    ..RsvdOptions::default()
                };
                let r = randomized_svd(&counted, rank, opts, &mut rng)?;
                Outcome::Residual(input.dense.sub(&r.reconstruct()))
            }
            "svd-oracle" => {
                if rank > n.min(m) {
                    return Err(rplu::Error::RankOutOfRange { rank, max: n.min(m) }.into());
                }
                let e = truncation_error_from_spectrum(&input.singular_values, rank);
                Outcome::Exact(e.frobenius, e.spectral)
            }
            "cauchy-rplu" | "cauchy-c2plu" => {
                let c = input
                    .cauchy
                    .as_ref()
                    .ok_or_else(|| anyhow!("method `{method}` needs a Cauchy-like input (smiley-cauchy, spiral-cauchy or a points file)"))?;
                let rule = if method == "cauchy-rplu" { StructuredRule::Rplu } else { StructuredRule::C2plu };
                let plan = build_plan(c.x(), c.y(), rplu::cauchy::DEFAULT_NU, rplu::tree::DEFAULT_LEAF_SIZE)?;
                let opts = StructuredOptions {
                    rank,
                    stop_tol: 0.0,
                    record_lu: false,
                };
                let t = structured_eliminate(c, rule, &opts, Some(&plan), &mut rng)?;
                Outcome::Residual(t.residual.to_dense())
            }
            other => bail!("unknown method `{other}` (known: {})", MATRIX_METHODS.join(", ")),
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let counts = counted.counts();

    let (frob, spec) = match outcome {
        Outcome::Exact(f, s) => (f, s),
        Outcome::Residual(r) => {
            let mut prng = RngState::new(seed ^ 0x9e37_79b9_7f4a_7c15);
            let s = spectral_norm_estimate(m, |x| Ok(r.matvec(x)), |y| Ok(r.adjoint_matvec(y)), POWER_ITERS, &mut prng)?;
            (r.frobenius_norm(), s)
        }
    };
    let rel = |x: f64, scale: f64| if scale > 0.0 { x / scale } else { 0.0 };
    Ok(ResultRow {
        rank,
        method: method.to_string(),
        seed,
        rel_frob_err: rel(frob, input.frobenius),
        rel_spec_err: rel(spec, input.spectral()),
        seconds,
        applies_a: counts.applies,
        applies_at: counts.adjoints,
    })
}

/// `(I - Q Q^*) A` for `Q` an orthonormal basis of `A[:, cols]`.
fn project_out(a: &DenseMatrix, cols: &[usize]) -> DenseMatrix {
    if cols.is_empty() {
        return a.clone();
    }
    let (n, _) = a.shape();
    let c = a.select(&(0..n).collect::<Vec<_>>(), cols).to_nalgebra();
    let q = c.qr().q();
    let an = a.to_nalgebra();
    let proj = &q * (q.adjoint() * &an);
    DenseMatrix::from_nalgebra(&(an - proj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> MatrixInput {
        let mut rng = RngState::new(3);
        let sigma: Vec<f64> = (1..=20).map(|j| 0.7f64.powi(j)).collect();
        let b = rplu::io::planted_spectrum(30, 30, &sigma, &mut rng).unwrap();
        MatrixInput::new(Loaded::Dense(b.matmul(&b.adjoint()).hermitian_part())).unwrap()
    }

    #[test]
    fn oracle_is_a_lower_bound() {
        let inp = input();
        for m in SWEEP_METHODS {
            // SRPLU steps are rank-2 updates.
            let reach = if m == "srplu" { 10 } else { 5 };
            let opt = run_method(&inp, Access::Full, "svd-oracle", reach, 0).unwrap();
            let r = run_method(&inp, Access::Full, m, 5, 7).unwrap();
            assert!(r.rel_frob_err >= opt.rel_frob_err * (1.0 - 1e-9), "{m}: {} < {}", r.rel_frob_err, opt.rel_frob_err);
        }
    }

    #[test]
    fn matvec_access_rejects_entry_methods() {
        let inp = input();
        let e = run_method(&inp, Access::Matvec, "cplu", 3, 0).unwrap_err();
        assert!(e.to_string().contains("`entry` capability"));
        run_method(&inp, Access::Matvec, "rsvd", 3, 0).unwrap();
        let e = run_method(&inp, Access::Matvec, "rplu-cur", 3, 0).unwrap_err();
        assert!(e.to_string().contains("row-norms"));
    }

    #[test]
    fn cur_counts_follow_the_ledger() {
        let r = run_method(&input(), Access::Full, "rplu-cur", 4, 1).unwrap();
        assert_eq!((r.applies_a, r.applies_at), (16, 8));
    }

    #[test]
    fn full_rank_is_exact() {
        let inp = input();
        for m in ["rplu", "cpqr", "svd-oracle"] {
            let r = run_method(&inp, Access::Full, m, 30, 2).unwrap();
            assert!(r.rel_frob_err < 1e-10, "{m}: {}", r.rel_frob_err);
        }
    }
}
