use nalgebra::DMatrix;
use proptest::prelude::*;

use rplu::accessor::basis;
use rplu::cauchy::CauchyLikeMatrix;
use rplu::linalg::norm2;
use rplu::lowmem::{cur_build, rebuild_row_norms, CoreMode, CurFactorization, CurRule};
use rplu::pivots::{eliminate, PivotRule};
use rplu::precond::{SmwPreconditioner, Tridiagonal};
use rplu::qless::{qless_qr, QrRule};
use rplu::rational::BarycentricRational;
use rplu::svd::svd;
use rplu::tree::build_plan;
use rplu::{DenseMatrix, MatrixAccessor, RngState, SparseMatrix, C64};

fn gaussian(n: usize, m: usize, seed: u64) -> DenseMatrix {
    let mut rng = RngState::new(seed);
    DenseMatrix::from_fn(n, m, |_, _| rng.complex_normal())
}

fn psd(n: usize, r: usize, seed: u64) -> DenseMatrix {
    let g = gaussian(n, r, seed);
    g.matmul(&g.adjoint()).hermitian_part()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
}

fn points(n: usize, shift: f64, rng: &mut RngState) -> Vec<C64> {
    (0..n).map(|_| C64::new(shift + rng.uniform(), rng.uniform())).collect()
}

fn check_accessor(a: &dyn MatrixAccessor, tol: f64) {
    let (n, m) = a.shape();
    let norms = a.row_norms().unwrap();
    for i in 0..n {
        let via_adjoint = a.adjoint_apply(&basis(n, i)).unwrap();
        let row = a.row(i).unwrap();
        let conj: Vec<C64> = via_adjoint.iter().map(|z| z.conj()).collect();
        assert!(rel_diff(&row, &conj) <= tol);
        let r2: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        assert!((norms[i] - r2).abs() <= tol * r2.max(f64::MIN_POSITIVE));
    }
    for j in 0..m {
        let col = a.column(j).unwrap();
        assert!(rel_diff(&col, &a.apply(&basis(m, j)).unwrap()) <= tol);
        for (i, c) in col.iter().enumerate() {
            assert!((a.entry(i, j).unwrap() - c).norm() <= tol * c.norm().max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accessor_capabilities_agree(n in 1usize..12, m in 1usize..12, seed in any::<u64>(), keep in 0.1f64..1.0) {
        let a = gaussian(n, m, seed);
        check_accessor(&a, 0.0);

        let mut rng = RngState::new(seed ^ 1);
        let trips: Vec<_> = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|_| rng.uniform() < keep)
            .map(|(i, j)| (i, j, a[(i, j)]))
            .collect();
        let (s, dups) = SparseMatrix::from_triplets(n, m, trips).unwrap();
        prop_assert_eq!(dups, 0);
        check_accessor(&s, 1e-12);

        let x = points(n, 0.0, &mut rng);
        let y = points(m, 2.0, &mut rng);
        check_accessor(&CauchyLikeMatrix::cauchy(x, y).unwrap(), 1e-12);
    }

    #[test]
    fn svd_is_sorted_and_reconstructs(n in 1usize..15, m in 1usize..15, seed in any::<u64>()) {
        let a = gaussian(n, m, seed);
        let s = svd(&a).unwrap();
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.singular_values.iter().all(|&x| x >= 0.0));
        prop_assert!(s.reconstruct().sub(&a).frobenius_norm() <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn elimination_trace_is_consistent(n in 2usize..14, m in 2usize..14, seed in any::<u64>(), rule in 0usize..3) {
        let a = gaussian(n, m, seed);
        let rule = [PivotRule::Rplu, PivotRule::Cplu, PivotRule::C2plu][rule];
        let k = n.min(m) / 2 + 1;
        let t = eliminate(&a, rule, k, 0.0, &mut RngState::new(seed)).unwrap();
        for (s, &(i, _)) in t.pivots.iter().enumerate() {
            prop_assert_eq!(t.l[(i, s)], C64::from(1.0));
        }
        prop_assert!(t.residual_norms.iter().all(|x| x.is_finite() && *x >= 0.0));
        let gap = a.sub(&t.l.matmul(&t.u)).sub(&t.residual).frobenius_norm();
        prop_assert!(gap <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn rng_stream_is_reproducible(seed in any::<u64>()) {
        let mut a = RngState::new(seed);
        let mut b = RngState::new(seed);
        for _ in 0..64 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            prop_assert_eq!(a.complex_normal(), b.complex_normal());
        }
    }

    #[test]
    fn deterministic_rules_ignore_rng(n in 2usize..10, seed in any::<u64>()) {
        let a = gaussian(n, n, seed);
        for rule in [PivotRule::Cplu, PivotRule::C2plu] {
            let x = eliminate(&a, rule, n / 2, 0.0, &mut RngState::new(1)).unwrap();
            let y = eliminate(&a, rule, n / 2, 0.0, &mut RngState::new(2)).unwrap();
            prop_assert_eq!(x.pivots, y.pivots);
        }
        let c = psd(n, n, seed);
        let x = eliminate(&c, PivotRule::GreedyCholesky, n / 2, 0.0, &mut RngState::new(1)).unwrap();
        let y = eliminate(&c, PivotRule::GreedyCholesky, n / 2, 0.0, &mut RngState::new(2)).unwrap();
        prop_assert_eq!(x.pivots, y.pivots);
    }

    #[test]
    fn cholesky_traces_decrease(n in 2usize..12, r in 1usize..12, seed in any::<u64>()) {
        let c = psd(n, r.min(n), seed);
        for rule in [PivotRule::RpCholesky, PivotRule::GreedyCholesky, PivotRule::Srplu] {
            let steps = (r.min(n) / 2).max(1);
            let t = eliminate(&c, rule, steps, 0.0, &mut RngState::new(seed)).unwrap();
            let tr = t.residual.trace().re;
            prop_assert!(tr <= c.trace().re * (1.0 + 1e-12));
            let min = t.residual.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-9 * c.trace().re);
        }
    }

    #[test]
    fn cur_indices_and_norms(n in 4usize..40, m in 4usize..40, seed in any::<u64>()) {
        let a = gaussian(n, m, seed);
        let k = n.min(m) / 2;
        let b = cur_build(&a, CurRule::RpluCur, k, 0.0, &mut RngState::new(seed)).unwrap();
        let (mut rows, mut cols) = (b.fact.rows.clone(), b.fact.cols.clone());
        prop_assert!(rows.iter().all(|&i| i < n) && cols.iter().all(|&j| j < m));
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), b.fact.rank());
        prop_assert_eq!(cols.len(), b.fact.rank());
        let fresh = rebuild_row_norms(&a, &b.fact).unwrap();
        let scale = fresh.iter().copied().fold(0.0, f64::max);
        for (x, y) in b.row_norms.iter().zip(&fresh) {
            prop_assert!((x - y).abs() <= 1e-6 * y.max(1e-10 * scale));
        }
    }

    #[test]
    fn core_solve_inverts_w(k in 1usize..12, seed in any::<u64>(), qr in any::<bool>()) {
        let w = gaussian(k, k, seed);
        let mode = if qr { CoreMode::Qr } else { CoreMode::Inverse };
        let rows: Vec<usize> = (0..k).collect();
        let f = CurFactorization::from_indices(&w, rows.clone(), rows, mode).unwrap();
        let v: Vec<C64> = gaussian(k, 1, seed ^ 3).as_slice().to_vec();
        let x = f.core.solve(&v).unwrap();
        let kappa = rplu::linalg::condition_number(&w);
        prop_assume!(kappa < 1e6);
        prop_assert!(rel_diff(&w.matvec(&x), &v) <= 1e-8 * kappa.max(1.0));
    }

    #[test]
    fn qless_qr_invariants(n in 6usize..30, m in 6usize..30, r in 1usize..6, seed in any::<u64>(), greedy in any::<bool>()) {
        // Exactly rank r.
        let a = gaussian(n, r, seed).matmul(&gaussian(r, m, seed ^ 7));
        let rule = if greedy { QrRule::Greedy } else { QrRule::Random };
        let q = qless_qr(&a, r, rule, &mut RngState::new(seed)).unwrap();
        prop_assert_eq!(q.rank(), r);
        for t in 0..r {
            prop_assert!(q.r[(t, t)].re > 0.0 && q.r[(t, t)].im == 0.0);
        }
        prop_assert!(q.col_norms.iter().all(|&c| c >= 0.0));
        // Residuals of the unselected columns, projected explicitly.
        let an = a.to_nalgebra();
        let sel = a.select(&(0..n).collect::<Vec<_>>(), &q.cols).to_nalgebra();
        let basis = sel.qr().q();
        let fro = a.frobenius_norm();
        for j in (0..m).filter(|j| !q.cols.contains(j)) {
            let c = an.column(j).into_owned();
            let res = &c - &basis * (basis.adjoint() * &c);
            prop_assert!(res.norm() <= 1e-8 * fro);
        }
    }

    #[test]
    fn cauchy_like_satisfies_displacement(n in 1usize..20, m in 1usize..20, p in 1usize..4, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let x = points(n, 0.0, &mut rng);
        let y = points(m, 1.5, &mut rng);
        let g: Vec<C64> = (0..p * n).map(|_| rng.complex_normal()).collect();
        let b: Vec<C64> = (0..p * m).map(|_| rng.complex_normal()).collect();
        let c = CauchyLikeMatrix::new(x.clone(), y.clone(), p, g.clone(), b.clone()).unwrap();
        prop_assert!(c.displacement_residual() <= 1e-10);
        for i in 0..n {
            for j in 0..m {
                let num: C64 = (0..p).map(|l| g[l * n + i] * b[l * m + j]).sum();
                prop_assert_eq!(c.get(i, j), num / (x[i] - y[j]));
            }
        }
    }

    #[test]
    fn interaction_plan_covers_and_admits(n in 1usize..150, m in 1usize..150, leaf in 1usize..20, nu in 1.5f64..8.0, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let x = points(n, 0.0, &mut rng);
        let y = points(m, 0.5, &mut rng);
        let plan = build_plan(&x, &y, nu, leaf).unwrap();
        prop_assert!(plan.targets.check_invariants() && plan.sources.check_invariants());
        for l in plan.target_leaves() {
            prop_assert!(plan.coverage(l).iter().all(|&h| h == 1));
            for &(s, _) in &plan.aggregated[l] {
                let (dmin, dmax) = rplu::tree::box_distances(&plan.targets.nodes[l], &plan.sources.nodes[s]);
                prop_assert!(dmax <= nu * dmin * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn barycentric_interpolates_and_is_scale_free(k in 1usize..8, seed in any::<u64>(), z in (-2.0f64..2.0, -2.0f64..2.0)) {
        let mut rng = RngState::new(seed);
        let t: Vec<C64> = (0..k).map(|j| C64::new(j as f64, rng.uniform())).collect();
        let w: Vec<C64> = (0..k).map(|_| rng.complex_normal()).collect();
        let f: Vec<C64> = (0..k).map(|_| rng.complex_normal()).collect();
        let r = BarycentricRational::new(t.clone(), w, f.clone()).unwrap();
        let wn: f64 = norm2(r.weights());
        prop_assert!((wn - 1.0).abs() <= 1e-12);
        for (tj, fj) in t.iter().zip(&f) {
            prop_assert_eq!(r.eval(*tj), *fj);
        }
        let z = C64::new(z.0, z.1);
        let s = r.with_scaled_weights(C64::from(2.0));
        let (a, b) = (r.eval(z), s.eval(z));
        prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn smw_matches_dense_inverse(n in 6usize..24, k in 1usize..5, seed in any::<u64>()) {
        let bt = Tridiagonal::laplacian(n, 1.0);
        let bd = bt.to_dense();
        let lmin = bd.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        let low = gaussian(n, k, seed).matmul(&gaussian(k, n, seed ^ 5));
        let a = low.scaled(C64::from(0.2 * lmin / low.frobenius_norm()));
        let b = cur_build(&a, CurRule::RpluCur, k, 0.0, &mut RngState::new(seed)).unwrap();
        prop_assume!(b.fact.rank() == k);
        let binv = bt.inverse();
        let p = SmwPreconditioner::build(&binv, &a, &b.fact).unwrap();
        let dense = bd.add(&a).to_nalgebra();
        let v = gaussian(n, 1, seed ^ 9).as_slice().to_vec();
        let want = dense.lu().solve(&DMatrix::from_column_slice(n, 1, &v)).unwrap();
        let got = p.apply(&v).unwrap();
        prop_assert!(rel_diff(&got, want.as_slice()) <= 1e-9);
    }
}
