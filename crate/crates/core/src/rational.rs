//! Barycentric rational functions, AAA, and CUR-AAA.

use nalgebra::DMatrix;

use crate::cauchy::{loewner_build, structured_eliminate, StructuredOptions, StructuredRule, DEFAULT_NU};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::rng::{argmax, RngState};
use crate::tree::{build_plan, DEFAULT_LEAF_SIZE};

/// Distance, relative to the support scale, within which evaluation returns
/// the stored support value.
pub const EXACT_HIT_TOL: f64 = 1e-14;

/// `|sum w_j / (z - t_j)|` below this multiple of `sum |w_j / (z - t_j)|`
/// marks the evaluation as pole-adjacent.
pub const POLE_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct BarycentricRational {
    support: Vec<C64>,
    weights: Vec<C64>,
    values: Vec<C64>,
    scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: C64,
    pub near_pole: bool,
}

impl BarycentricRational {
    /// Weights are normalized to unit 2-norm.
    pub fn new(support: Vec<C64>, weights: Vec<C64>, values: Vec<C64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("need at least one support point".into()));
        }
        crate::error::check_len(support.len(), weights.len())?;
        crate::error::check_len(support.len(), values.len())?;
        if support.iter().chain(&weights).chain(&values).any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some((a, b)) = first_duplicate(&support) {
            return Err(Error::InvalidArgument(format!("support points {a} and {b} coincide")));
        }
        let norm = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("weights are all zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / norm).collect();
        let scale = support.iter().map(|t| t.norm()).fold(1.0, f64::max);
        Ok(Self {
            support,
            weights,
            values,
            scale,
        })
    }

    /// The constant function `value`, with one support point at `t`.
    pub fn constant(t: C64, value: C64) -> Self {
        Self {
            support: vec![t],
            weights: vec![C64::from(1.0)],
            values: vec![value],
            scale: t.norm().max(1.0),
        }
    }

    pub fn support(&self) -> &[C64] {
        &self.support
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.eval_flagged(z).value
    }

    pub fn eval_flagged(&self, z: C64) -> Evaluation {
        if self.support.len() == 1 {
            return Evaluation {
                value: self.values[0],
                near_pole: false,
            };
        }
        let hit = EXACT_HIT_TOL * self.scale;
        let mut num = ZERO;
        let mut den = ZERO;
        let mut mag = 0.0;
        for ((t, w), f) in self.support.iter().zip(&self.weights).zip(&self.values) {
            let d = z - t;
            if d.norm() <= hit {
                return Evaluation {
                    value: *f,
                    near_pole: false,
                };
            }
            let c = w / d;
            num += c * f;
            den += c;
            mag += c.norm();
        }
        Evaluation {
            value: num / den,
            near_pole: den.norm() <= POLE_TOL * mag,
        }
    }

    /// Rescales the weights by `c` without renormalizing.
    pub fn with_scaled_weights(&self, c: C64) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w *= c;
        }
        out
    }
}

fn first_duplicate(points: &[C64]) -> Option<(usize, usize)> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (points[a], points[b]);
        p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im))
    });
    idx.windows(2)
        .find(|w| points[w[0]] == points[w[1]])
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

#[derive(Clone, Debug)]
pub struct SampleSet {
    pub points: Vec<C64>,
    pub values: Vec<C64>,
}

impl SampleSet {
    pub fn new(points: Vec<C64>, values: Vec<C64>) -> Result<Self> {
        crate::error::check_len(points.len(), values.len())?;
        if points.iter().chain(&values).any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some((a, b)) = first_duplicate(&points) {
            return Err(Error::InvalidArgument(format!("sample points {a} and {b} coincide")));
        }
        Ok(Self { points, values })
    }

    pub fn from_fn(points: Vec<C64>, f: impl Fn(C64) -> C64) -> Result<Self> {
        let values = points.iter().map(|&z| f(z)).collect();
        Self::new(points, values)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|f| f.norm()).fold(0.0, f64::max)
    }

    /// `max_i |f_i - r(z_i)|`.
    pub fn max_error(&self, r: &BarycentricRational) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(&z, f)| (f - r.eval(z)).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum error divided by `max_i |f_i|`; the absolute error when `f = 0`.
    pub fn relative_error(&self, r: &BarycentricRational) -> f64 {
        let scale = self.max_abs();
        let err = self.max_error(r);
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

/// Weights of the fit and the smallest singular value of its Loewner matrix.
#[derive(Clone, Debug)]
pub struct WeightSolve {
    pub weights: Vec<C64>,
    pub sigma_min: f64,
}

/// Minimizes `||L w||` over unit `w`, where
/// `L[i, j] = (f(z_i) - f(t_j)) / (z_i - t_j)` with `z_i` the samples in
/// `rows` and `t_j` those in `support`.
pub fn loewner_weights(samples: &SampleSet, support: &[usize], rows: &[usize]) -> Result<WeightSolve> {
    let k = support.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty support set".into()));
    }
    let nr = rows.len().max(k);
    let mut l = DMatrix::<C64>::zeros(nr, k);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            l[(a, b)] = (samples.values[i] - samples.values[j]) / (samples.points[i] - samples.points[j]);
        }
    }
    let svd = l
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("Loewner SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V");
    let s = svd.singular_values;
    let idx = (0..s.len())
        .min_by(|&a, &b| s[a].total_cmp(&s[b]))
        .expect("nonempty spectrum");
    let weights = (0..k).map(|j| v_t[(idx, j)].conj()).collect();
    Ok(WeightSolve {
        weights,
        sigma_min: s[idx],
    })
}

fn fit(samples: &SampleSet, support: &[usize], rows: &[usize]) -> Result<BarycentricRational> {
    let ws = loewner_weights(samples, support, rows)?;
    BarycentricRational::new(
        support.iter().map(|&j| samples.points[j]).collect(),
        ws.weights,
        support.iter().map(|&j| samples.values[j]).collect(),
    )
}

/// Fits on `support` with every other sample as a Loewner row and returns
/// the relative training error.
fn fit_on_rest(samples: &SampleSet, support: &[usize]) -> Result<(BarycentricRational, f64)> {
    let mut mark = vec![false; samples.len()];
    for &j in support {
        mark[j] = true;
    }
    let rest: Vec<usize> = (0..samples.len()).filter(|&i| !mark[i]).collect();
    let r = fit(samples, support, &rest)?;
    let err = samples.relative_error(&r);
    Ok((r, err))
}

#[derive(Clone, Debug)]
pub struct AaaResult {
    pub rational: BarycentricRational,
    /// Support indices into the sample set, in selection order.
    pub support: Vec<usize>,
    /// Relative training error after each support point was added.
    pub errors: Vec<f64>,
    pub converged: bool,
}

/// Classical AAA. Stops once `max_i |f_i - r(z_i)| <= tol * max_i |f_i|`
/// or when the degree reaches `max_degree`.
pub fn aaa(samples: &SampleSet, tol: f64, max_degree: usize) -> Result<AaaResult> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidArgument("AAA needs at least two samples".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let fmax = samples.max_abs();
    let threshold = tol * fmax;
    let mean = samples.values.iter().sum::<C64>() / m as f64;
    let mut residual: Vec<f64> = samples.values.iter().map(|f| (f - mean).norm()).collect();
    let mut in_support = vec![false; m];
    let mut support = vec![];
    let mut errors = vec![];
    let mut rational = None;
    let mut converged = false;

    while support.len() <= max_degree && support.len() < m {
        let j = argmax(&residual).expect("nonempty samples");
        support.push(j);
        in_support[j] = true;
        let rows: Vec<usize> = (0..m).filter(|&i| !in_support[i]).collect();
        let r = if support.len() == 1 {
            BarycentricRational::constant(samples.points[j], samples.values[j])
        } else {
            fit(samples, &support, &rows)?
        };
        residual = vec![0.0; m];
        for &i in &rows {
            residual[i] = (samples.values[i] - r.eval(samples.points[i])).norm();
        }
        let err = residual.iter().copied().fold(0.0, f64::max);
        errors.push(if fmax > 0.0 { err / fmax } else { err });
        rational = Some(r);
        if err <= threshold {
            converged = true;
            break;
        }
    }
    Ok(AaaResult {
        rational: rational.expect("at least one step"),
        support,
        errors,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurSide {
    /// Support from the selected rows, drawn from the first half `X`.
    Rows,
    /// Support from the selected columns, drawn from the second half `Y`.
    Cols,
}

#[derive(Clone, Debug)]
pub struct CurAaaResult {
    pub rational: BarycentricRational,
    pub side: CurSide,
    /// Support indices into the sample set.
    pub support: Vec<usize>,
    /// Relative training errors of the row and column candidates.
    pub candidate_errors: (f64, f64),
    pub steps: usize,
    /// Set when elimination made no pivot and classical AAA was used.
    pub fell_back: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CurAaaOptions {
    pub tol: f64,
    pub rule: StructuredRule,
    pub nu: f64,
    pub leaf_size: usize,
    /// Degree cap for the fallback AAA run.
    pub max_degree: usize,
}

impl Default for CurAaaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            rule: StructuredRule::Rplu,
            nu: DEFAULT_NU,
            leaf_size: DEFAULT_LEAF_SIZE,
            max_degree: 200,
        }
    }
}

/// CUR-AAA: support points from a structured CUR of the split Loewner matrix,
/// followed by one weight solve per candidate.
pub fn cur_aaa(samples: &SampleSet, opts: &CurAaaOptions, rng: &mut RngState) -> Result<CurAaaResult> {
    let m = samples.len();
    if m < 4 {
        return Err(Error::InvalidArgument("CUR-AAA needs at least four samples".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let perm = rng.permutation(m);
    let (xi, yi) = perm.split_at(m.div_ceil(2));
    let pick = |idx: &[usize], v: &[C64]| -> Vec<C64> { idx.iter().map(|&i| v[i]).collect() };
    let (x, y) = (pick(xi, &samples.points), pick(yi, &samples.points));
    let (lw, _) = loewner_build(&x, &pick(xi, &samples.values), &y, &pick(yi, &samples.values))?;
    let plan = build_plan(&x, &y, opts.nu, opts.leaf_size)?;
    let sopts = StructuredOptions {
        rank: x.len().min(y.len()),
        stop_tol: opts.tol,
        record_lu: false,
    };
    let trace = structured_eliminate(&lw, opts.rule, &sopts, Some(&plan), rng)?;

    if trace.steps() == 0 {
        let res = aaa(samples, opts.tol, opts.max_degree)?;
        let err = samples.relative_error(&res.rational);
        return Ok(CurAaaResult {
            rational: res.rational,
            side: CurSide::Rows,
            support: res.support,
            candidate_errors: (err, err),
            steps: 0,
            fell_back: true,
        });
    }

    let rows_support: Vec<usize> = trace.rows.iter().map(|&i| xi[i]).collect();
    let cols_support: Vec<usize> = trace.cols.iter().map(|&j| yi[j]).collect();
    // The K pivots of a rank-K Loewner matrix leave the K-column AAA Loewner
    // matrix without a null vector. Candidates therefore take greedy extra
    // points, AAA style, while the training error is above `tol` and falls.
    let tol = opts.tol;
    let candidate = |support: Vec<usize>| -> Result<(BarycentricRational, f64, Vec<usize>)> {
        let extra = support.len() + 1;
        let (mut r, mut err) = fit_on_rest(samples, &support)?;
        let mut support = support;
        for _ in 0..extra {
            if err <= tol || support.len() + 1 >= m {
                break;
            }
            let worst = argmax(
                &samples
                    .points
                    .iter()
                    .zip(&samples.values)
                    .map(|(&z, f)| (f - r.eval(z)).norm())
                    .collect::<Vec<_>>(),
            )
            .expect("nonempty samples");
            if support.contains(&worst) {
                break;
            }
            support.push(worst);
            let (r2, err2) = fit_on_rest(samples, &support)?;
            if err2 >= err {
                support.pop();
                break;
            }
            (r, err) = (r2, err2);
        }
        Ok((r, err, support))
    };
    let (ra, rb) = rayon::join(|| candidate(rows_support), || candidate(cols_support));
    let (ra, ea, sa) = ra?;
    let (rb, eb, sb) = rb?;
    let (rational, side, support) = if ea <= eb {
        (ra, CurSide::Rows, sa)
    } else {
        (rb, CurSide::Cols, sb)
    };
    Ok(CurAaaResult {
        rational,
        side,
        support,
        candidate_errors: (ea, eb),
        steps: trace.steps(),
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::from(re)
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<C64> {
        (0..n).map(|i| c(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn single_term_is_constant() {
        let r = BarycentricRational::new(vec![c(0.3)], vec![c(5.0)], vec![c(7.0)]).unwrap();
        for z in [c(-4.0), C64::new(1.0, 2.0), c(0.3)] {
            assert!((r.eval(z) - 7.0).norm() < 1e-15);
        }
    }

    #[test]
    fn exact_hit_returns_support_value() {
        let r = BarycentricRational::new(vec![c(-1.0), c(1.0)], vec![c(1.0), c(1.0)], vec![c(2.0), c(3.0)]).unwrap();
        assert_eq!(r.eval(c(1.0)), c(3.0));
        assert_eq!(r.eval(c(-1.0)), c(2.0));
    }

    #[test]
    fn linear_from_two_point_loewner() {
        let s = SampleSet::new(vec![c(-1.0), c(1.0), c(0.5)], vec![c(-1.0), c(1.0), c(0.5)]).unwrap();
        let r = fit(&s, &[0, 1], &[2]).unwrap();
        assert!(r.eval(c(0.0)).norm() < 1e-12);
        assert!((r.eval(c(0.25)) - 0.25).norm() < 1e-12);
    }

    #[test]
    fn weight_scale_invariance() {
        let r = BarycentricRational::new(
            vec![c(-1.0), c(0.0), c(1.0)],
            vec![c(0.3), C64::new(-0.2, 0.1), c(0.7)],
            vec![c(1.0), c(2.0), C64::new(0.0, 1.0)],
        )
        .unwrap();
        for s in [c(2.0), C64::new(0.0, 1.0)] {
            let q = r.with_scaled_weights(s);
            for z in [c(0.37), C64::new(0.2, -0.9)] {
                let (a, b) = (r.eval(z), q.eval(z));
                assert!((a - b).norm() <= 1e-14 * a.norm());
            }
        }
    }

    #[test]
    fn rejects_duplicate_support_and_samples() {
        assert!(BarycentricRational::new(vec![c(1.0), c(1.0)], vec![c(1.0); 2], vec![c(0.0); 2]).is_err());
        assert!(SampleSet::new(vec![c(1.0), c(1.0)], vec![c(0.0); 2]).is_err());
        assert!(BarycentricRational::new(vec![c(1.0)], vec![c(0.0)], vec![c(0.0)]).is_err());
    }

    #[test]
    fn aaa_constant() {
        let s = SampleSet::from_fn(linspace(-1.0, 1.0, 50), |_| c(3.0)).unwrap();
        let res = aaa(&s, 1e-12, 50).unwrap();
        assert_eq!(res.rational.len(), 1);
        assert_eq!(s.max_error(&res.rational), 0.0);
        assert!(res.converged);
    }

    #[test]
    fn aaa_reproduces_simple_pole() {
        let s = SampleSet::from_fn(linspace(-1.0, 1.0, 100), |z| 1.0 / (z - 2.0)).unwrap();
        let res = aaa(&s, 1e-12, 50).unwrap();
        assert_eq!(res.rational.len(), 2);
        assert!(s.max_error(&res.rational) <= 1e-12);
        let z = C64::new(0.1, 0.4);
        assert!((res.rational.eval(z) - 1.0 / (z - 2.0)).norm() < 1e-12);
    }

    #[test]
    fn aaa_first_pick_is_farthest_from_mean() {
        let pts = linspace(0.0, 1.0, 5);
        let vals = vec![c(0.0), c(0.1), c(0.2), c(5.0), c(0.1)];
        let s = SampleSet::new(pts, vals).unwrap();
        let res = aaa(&s, 1e-14, 0).unwrap();
        assert_eq!(res.support, vec![3]);
    }

    #[test]
    fn linearized_residual_is_sigma_min() {
        let s = SampleSet::from_fn(linspace(-1.0, 1.0, 40), |z| z.exp()).unwrap();
        let support = [0, 13, 27, 39];
        let rows: Vec<usize> = (0..40).filter(|i| !support.contains(i)).collect();
        let ws = loewner_weights(&s, &support, &rows).unwrap();
        let mut lw = 0.0;
        for &i in &rows {
            let v: C64 = support
                .iter()
                .zip(&ws.weights)
                .map(|(&j, w)| (s.values[i] - s.values[j]) / (s.points[i] - s.points[j]) * w)
                .sum();
            lw += v.norm_sqr();
        }
        assert!((lw.sqrt() - ws.sigma_min).abs() <= 1e-10);
    }

    #[test]
    fn cur_aaa_zero_function() {
        let s = SampleSet::from_fn(linspace(-1.0, 1.0, 40), |_| ZERO).unwrap();
        let res = cur_aaa(&s, &CurAaaOptions::default(), &mut RngState::new(3)).unwrap();
        assert!(res.fell_back);
        assert_eq!(s.max_error(&res.rational), 0.0);
    }

    #[test]
    fn cur_aaa_simple_pole() {
        let s = SampleSet::from_fn(linspace(-1.0, 1.0, 400), |z| 1.0 / (z - 2.0)).unwrap();
        let opts = CurAaaOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let res = cur_aaa(&s, &opts, &mut RngState::new(11)).unwrap();
        assert!(!res.fell_back);
        assert!(s.max_error(&res.rational) <= 1e-8);
        for t in res.rational.support() {
            assert!(s.points.contains(t));
        }
    }
}
