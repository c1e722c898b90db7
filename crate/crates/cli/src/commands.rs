//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use rplu::cauchy::{structured_eliminate, CauchyLikeMatrix, StructuredOptions, StructuredPivotTrace, StructuredRule};
use rplu::io::{load, read_points, write_results_to, InputSpec, Loaded, ResultRow, RunConfig};
use rplu::lowmem::CurRule;
use rplu::precond::{precond_demo, DemoOptions, GmresOptions};
use rplu::rational::{aaa, cur_aaa, BarycentricRational, CurAaaOptions, SampleSet};
use rplu::theory::{run_suite, Suite, TheoryOptions};
use rplu::tree::build_plan;
use rplu::{RngState, VERSION};

use crate::methods::{run_method, MatrixInput, SWEEP_METHODS};
use crate::{AaaArgs, ApproxArgs, CauchyArgs, Command, PrecondArgs, SweepArgs, TheoryArgs};

/// Runs a command; `Ok(false)` means it completed but reported a failure.
pub fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Approx(a) => approx(a),
        Command::Sweep(a) => sweep(a),
        Command::TheoryCheck(a) => theory_check(a),
        Command::Cauchy(a) => cauchy(a),
        Command::Aaa(a) => aaa_cmd(a),
        Command::PrecondDemo(a) => precond(a),
    }
}

fn header(command: &str, config: &serde_json::Value) -> Vec<String> {
    vec![
        format!("rplu {VERSION} {command}"),
        format!("config: {config}"),
    ]
}

fn emit(out: Option<&Path>, header: &[String], body: &str) -> Result<()> {
    let mut text = String::new();
    for h in header {
        for line in h.lines() {
            writeln!(text, "# {line}")?;
        }
    }
    text.push_str(body);
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_results_to(&mut buf, &[], rows)?;
    Ok(String::from_utf8(buf)?)
}

/// Parses `a..b` (inclusive), `a..=b`, a single rank or a comma list.
pub fn parse_ranks(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty rank range `{s}`");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| anyhow!("bad rank `{t}`: {e}")))
        .collect()
}

fn sweep(a: SweepArgs) -> Result<bool> {
    for m in &a.methods {
        if !SWEEP_METHODS.contains(&m.as_str()) {
            bail!("unknown sweep method `{m}` (known: {})", SWEEP_METHODS.join(", "));
        }
    }
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let ranks = parse_ranks(&a.ranks)?;
    let spec = InputSpec::parse(&a.input)?;
    let input = MatrixInput::new(load(&spec, a.seed.seed, false)?)?;

    let jobs: Vec<(&str, usize, u64)> = a
        .methods
        .iter()
        .flat_map(|m| {
            ranks
                .iter()
                .flat_map(move |&k| (0..a.trials).map(move |t| (m.as_str(), k, a.seed.seed ^ t as u64)))
        })
        .collect();
    let rows: Vec<ResultRow> = jobs
        .par_iter()
        .map(|&(m, k, s)| run_method(&input, a.access, m, k, s).with_context(|| format!("{m} at rank {k}")))
        .collect::<Result<_>>()?;

    let config = json!({
        "input": spec.to_string(),
        "methods": a.methods,
        "ranks": a.ranks,
        "trials": a.trials,
        "seed": a.seed.seed,
        "access": a.access,
        "shape": input.shape(),
    });
    emit(a.out.as_deref(), &header("sweep", &config), &results_csv(&rows)?)?;
    Ok(true)
}

fn approx(a: ApproxArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let alg = a.algorithm.as_deref().expect("clap enforces --algorithm");
            let input = InputSpec::parse(a.input.as_deref().expect("clap enforces --input"))?;
            let mut c = RunConfig::new(alg, input);
            c.rank = a.rank;
            c.tol = a.tol;
            if let Some(nu) = a.nu {
                c.nu = nu;
            }
            if let Some(l) = a.leaf_size {
                c.leaf_size = l;
            }
            c
        }
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    let config: serde_json::Value = serde_json::from_str(&cfg.to_json())?;
    let out = cfg.output.clone();

    match cfg.algorithm.as_str() {
        "cauchy-rplu" | "cauchy-c2plu" => {
            let rule = if cfg.algorithm == "cauchy-rplu" { StructuredRule::Rplu } else { StructuredRule::C2plu };
            let c = cauchy_input(load(&cfg.input, cfg.seed, false)?)?;
            let tol = cfg.tol.expect("validated");
            let (row, _) = cauchy_run(&c, rule, cfg.nu, cfg.leaf_size, tol, cfg.rank, cfg.seed)?;
            emit(out.as_deref(), &header("approx", &config), &format!("{CAUCHY_HEADER}\n{row}\n"))?;
        }
        "aaa" | "cur-rplu" | "cur-c2plu" => {
            let samples = samples_input(load(&cfg.input, cfg.seed, true)?)?;
            let opts = AaaRun {
                tol: cfg.tol.expect("validated"),
                holdout: 0.2,
                nu: cfg.nu,
                leaf_size: cfg.leaf_size,
                max_degree: 200,
                seed: cfg.seed,
            };
            let res = aaa_run(&samples, &[cfg.algorithm.as_str()], &opts)?;
            emit(out.as_deref(), &header("approx", &config), &aaa_csv(&res))?;
        }
        alg => {
            let input = MatrixInput::new(load(&cfg.input, cfg.seed, false)?)?;
            let rank = cfg.rank.expect("validated");
            let row = run_method(&input, a.access, alg, rank, cfg.seed)?;
            emit(out.as_deref(), &header("approx", &config), &results_csv(&[row])?)?;
        }
    }
    Ok(true)
}

fn theory_check(a: TheoryArgs) -> Result<bool> {
    let suites: Vec<Suite> = match &a.suite {
        Some(s) => vec![s.parse()?],
        None => Suite::ALL.to_vec(),
    };
    let opts = TheoryOptions {
        seed: a.seed.seed,
        ..TheoryOptions::default()
    };
    let reports: Vec<_> = suites.par_iter().map(|&s| run_suite(s, &opts)).collect::<Result<_, _>>()?;
    let mut body = String::from("suite,check,measured,bound,margin,pass\n");
    let mut ok = true;
    for r in &reports {
        for c in &r.checks {
            ok &= c.passed();
            writeln!(
                body,
                "{},\"{}\",{:e},{:e},{:e},{}",
                r.suite,
                c.name,
                c.measured,
                c.bound,
                c.margin(),
                c.passed()
            )?;
        }
        eprintln!("{}: {} ({:.2}s)", r.suite, if r.passed() { "pass" } else { "FAIL" }, r.seconds);
    }
    let config = json!({
        "suites": suites.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "seed": opts.seed,
        "doubling_instances": opts.doubling_instances,
        "doubling_trials": opts.doubling_trials,
        "gram_instances": opts.gram_instances,
        "srplu_instances": opts.srplu_instances,
        "phi_iters": opts.phi_iters,
    });
    emit(a.out.as_deref(), &header("theory-check", &config), &body)?;
    Ok(ok)
}

pub const CAUCHY_HEADER: &str = "rule,n,m,steps,proposals,acceptances,fallbacks,stop,rel_frob_err,seconds";

fn cauchy_input(l: Loaded) -> Result<CauchyLikeMatrix> {
    match l {
        Loaded::Cauchy(c) => Ok(c),
        other => bail!("expected a Cauchy-like input, got a {} input", other.kind()),
    }
}

fn samples_input(l: Loaded) -> Result<SampleSet> {
    match l {
        Loaded::Samples(s) => Ok(s),
        other => bail!("expected a sample set, got a {} input", other.kind()),
    }
}

fn parse_structured_rule(s: &str) -> Result<StructuredRule> {
    match s {
        "rplu" => Ok(StructuredRule::Rplu),
        "c2plu" => Ok(StructuredRule::C2plu),
        other => bail!("unknown rule `{other}` (expected rplu or c2plu)"),
    }
}

/// Runs structured elimination and returns the summary CSV row and trace.
pub fn cauchy_run(
    c: &CauchyLikeMatrix,
    rule: StructuredRule,
    nu: f64,
    leaf_size: usize,
    tol: f64,
    rank: Option<usize>,
    seed: u64,
) -> Result<(String, StructuredPivotTrace)> {
    let (n, m) = rplu::MatrixAccessor::shape(c);
    let start = Instant::now();
    let plan = build_plan(c.x(), c.y(), nu, leaf_size)?;
    let opts = StructuredOptions {
        rank: rank.unwrap_or(n.min(m)),
        stop_tol: tol,
        record_lu: false,
    };
    let trace = structured_eliminate(c, rule, &opts, Some(&plan), &mut RngState::new(seed))?;
    let seconds = start.elapsed().as_secs_f64();
    let dense = c.to_dense();
    let scale = dense.frobenius_norm();
    let err = if scale > 0.0 { trace.residual.to_dense().frobenius_norm() / scale } else { 0.0 };
    let rule_name = match rule {
        StructuredRule::Rplu => "rplu",
        StructuredRule::C2plu => "c2plu",
    };
    let row = format!(
        "{rule_name},{n},{m},{},{},{},{},{:?},{err:e},{seconds:.6}",
        trace.steps(),
        trace.proposals,
        trace.acceptances,
        trace.fallbacks,
        trace.stop
    );
    Ok((row, trace))
}

fn cauchy(a: CauchyArgs) -> Result<bool> {
    let rule = parse_structured_rule(&a.rule)?;
    let (c, source) = match (&a.points, &a.input) {
        (Some(p), _) => {
            let (x, y) = read_points(p)?;
            (CauchyLikeMatrix::cauchy(x, y)?, p.display().to_string())
        }
        (None, Some(s)) => {
            let spec = InputSpec::parse(s)?;
            (cauchy_input(load(&spec, a.seed.seed, false)?)?, spec.to_string())
        }
        (None, None) => bail!("give --points or --input"),
    };
    let (row, trace) = cauchy_run(&c, rule, a.nu, a.leaf_size, a.tol, a.rank, a.seed.seed)?;
    let config = json!({
        "input": source,
        "rule": a.rule,
        "nu": a.nu,
        "leaf_size": a.leaf_size,
        "tol": a.tol,
        "rank": a.rank,
        "seed": a.seed.seed,
    });
    let head = header("cauchy", &config);
    if let Some(p) = &a.pivots {
        let mut body = String::from("step,row,col,bound_max\n");
        for (t, (i, j)) in trace.rows.iter().zip(&trace.cols).enumerate() {
            writeln!(body, "{t},{i},{j},{:e}", trace.bound_max.get(t).copied().unwrap_or(f64::NAN))?;
        }
        emit(Some(p), &head, &body)?;
    }
    emit(a.out.as_deref(), &head, &format!("{CAUCHY_HEADER}\n{row}\n"))?;
    Ok(true)
}

/// Settings shared by the AAA variants.
pub struct AaaRun {
    pub tol: f64,
    pub holdout: f64,
    pub nu: f64,
    pub leaf_size: usize,
    pub max_degree: usize,
    pub seed: u64,
}

pub struct AaaOutcome {
    pub method: &'static str,
    pub rational: BarycentricRational,
    pub train_err: f64,
    pub holdout_err: f64,
    pub seconds: f64,
}

fn max_rel_error(r: &BarycentricRational, s: &SampleSet, scale: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let e = s
        .points
        .iter()
        .zip(&s.values)
        .map(|(&z, &f)| (r.eval(z) - f).norm())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        e / scale
    } else {
        e
    }
}

/// Splits off a random holdout set and fits each method on the rest.
/// Errors are maximum absolute errors divided by `max |f|` over all samples.
pub fn aaa_run(samples: &SampleSet, methods: &[&str], opts: &AaaRun) -> Result<Vec<AaaOutcome>> {
    if !(0.0..1.0).contains(&opts.holdout) {
        bail!("--holdout must lie in [0, 1)");
    }
    let m = samples.len();
    let mut rng = RngState::new(opts.seed);
    let perm = rng.permutation(m);
    let h = ((opts.holdout * m as f64).round() as usize).min(m.saturating_sub(4));
    let pick = |idx: &[usize]| -> Result<SampleSet> {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Ok(SampleSet::new(
            idx.iter().map(|&i| samples.points[i]).collect(),
            idx.iter().map(|&i| samples.values[i]).collect(),
        )?)
    };
    let hold = pick(&perm[..h])?;
    let train = pick(&perm[h..])?;
    let scale = samples.max_abs();

    let mut out = Vec::new();
    for &method in methods {
        let start = Instant::now();
        let (name, rational) = match method {
            "aaa" => ("aaa", aaa(&train, opts.tol, opts.max_degree)?.rational),
            "cur-rplu" | "cur-c2plu" => {
                let rule = if method == "cur-rplu" { StructuredRule::Rplu } else { StructuredRule::C2plu };
                let o = CurAaaOptions {
                    tol: opts.tol,
                    rule,
                    nu: opts.nu,
                    leaf_size: opts.leaf_size,
                    max_degree: opts.max_degree,
                };
                let name = if method == "cur-rplu" { "cur-aaa-rplu" } else { "cur-aaa-c2plu" };
                (name, cur_aaa(&train, &o, &mut RngState::new(opts.seed))?.rational)
            }
            other => bail!("unknown AAA method `{other}` (expected aaa, cur-rplu, cur-c2plu or all)"),
        };
        let seconds = start.elapsed().as_secs_f64();
        out.push(AaaOutcome {
            method: name,
            train_err: max_rel_error(&rational, &train, scale),
            holdout_err: max_rel_error(&rational, &hold, scale),
            rational,
            seconds,
        });
    }
    Ok(out)
}

pub const AAA_HEADER: &str = "method,support,train_max_err,holdout_max_err,seconds";

fn aaa_csv(res: &[AaaOutcome]) -> String {
    let mut s = format!("{AAA_HEADER}\n");
    for r in res {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:.6}",
            r.method,
            r.rational.len(),
            r.train_err,
            r.holdout_err,
            r.seconds
        );
    }
    s
}

fn aaa_cmd(a: AaaArgs) -> Result<bool> {
    let (samples, source) = match (&a.samples, &a.input) {
        (Some(p), _) => (rplu::io::read_samples(p)?, p.display().to_string()),
        (None, Some(s)) => {
            let spec = InputSpec::parse(s)?;
            (samples_input(load(&spec, a.seed.seed, true)?)?, spec.to_string())
        }
        (None, None) => bail!("give --samples or --input"),
    };
    let methods: Vec<&str> = if a.method == "all" {
        vec!["aaa", "cur-rplu", "cur-c2plu"]
    } else {
        vec![a.method.as_str()]
    };
    let opts = AaaRun {
        tol: a.tol,
        holdout: a.holdout,
        nu: a.nu,
        leaf_size: a.leaf_size,
        max_degree: a.max_degree,
        seed: a.seed.seed,
    };
    let res = aaa_run(&samples, &methods, &opts)?;
    let config = json!({
        "input": source,
        "samples": samples.len(),
        "method": a.method,
        "tol": a.tol,
        "holdout": a.holdout,
        "nu": a.nu,
        "leaf_size": a.leaf_size,
        "max_degree": a.max_degree,
        "seed": a.seed.seed,
    });
    let head = header("aaa", &config);
    if let Some(p) = &a.dump {
        let mut body = String::from("method,t_re,t_im,w_re,w_im,f_re,f_im\n");
        for r in &res {
            let q = &r.rational;
            for ((t, w), f) in q.support().iter().zip(q.weights()).zip(q.values()) {
                writeln!(body, "{},{:?},{:?},{:?},{:?},{:?},{:?}", r.method, t.re, t.im, w.re, w.im, f.re, f.im)?;
            }
        }
        emit(Some(p), &head, &body)?;
    }
    emit(a.out.as_deref(), &head, &aaa_csv(&res))?;
    Ok(true)
}

fn precond(a: PrecondArgs) -> Result<bool> {
    let rule = match a.rule.as_str() {
        "rplu" => CurRule::RpluCur,
        "c2plu" => CurRule::C2pluCur,
        other => bail!("unknown rule `{other}` (expected rplu or c2plu)"),
    };
    let opts = DemoOptions {
        n: a.n,
        rank: a.rank,
        span: a.span,
        sigma: a.sigma,
        delta: a.delta,
        stop_tol: 0.0,
        rule,
        seed: a.seed.seed,
        gmres: GmresOptions {
            restart: a.restart,
            tol: a.tol,
            max_restarts: a.max_restarts,
        },
    };
    let start = Instant::now();
    let r = precond_demo(&opts, a.check_dense)?;
    let seconds = start.elapsed().as_secs_f64();
    let config = json!({
        "n": a.n,
        "rank": a.rank,
        "rule": a.rule,
        "span": a.span,
        "sigma": a.sigma,
        "delta": a.delta,
        "restart": a.restart,
        "tol": a.tol,
        "max_restarts": a.max_restarts,
        "check_dense": a.check_dense,
        "seed": a.seed.seed,
    });
    let mut head = header("precond-demo", &config);
    head.push(format!("smw: rank={} kappa={:e} dense_error={:?}", r.rank, r.kappa, r.smw_dense_error));
    head.push(format!("iteration_ratio: {:.6} seconds: {seconds:.3}", r.iteration_ratio()));
    let mut body = String::from("solver,iterations,converged,stagnated,final_rel_residual\n");
    for (name, g) in [("none", &r.unpreconditioned), ("smw", &r.preconditioned)] {
        writeln!(
            body,
            "{name},{},{},{},{:e}",
            g.iterations,
            g.converged,
            g.stagnated,
            g.residuals.last().copied().unwrap_or(f64::NAN)
        )?;
    }
    if let Some(p) = &a.history {
        let mut h = String::from("solver,index,rel_residual\n");
        for (name, g) in [("none", &r.unpreconditioned), ("smw", &r.preconditioned)] {
            for (i, x) in g.residuals.iter().enumerate() {
                writeln!(h, "{name},{i},{x:e}")?;
            }
        }
        emit(Some(p), &head, &h)?;
    }
    emit(a.out.as_deref(), &head, &body)?;
    Ok(r.preconditioned.converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_ranges() {
        assert_eq!(parse_ranks("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_ranks("2..=2").unwrap(), vec![2]);
        assert_eq!(parse_ranks("4,8").unwrap(), vec![4, 8]);
        assert!(parse_ranks("3..1").is_err());
        assert!(parse_ranks("x").is_err());
    }

    #[test]
    fn aaa_on_inverse_shift() {
        let pts: Vec<_> = (0..100).map(|i| rplu::C64::new(-1.0 + 2.0 * i as f64 / 99.0, 0.0)).collect();
        let s = SampleSet::from_fn(pts, |z| 1.0 / (z - 2.0)).unwrap();
        let opts = AaaRun {
            tol: 1e-13,
            holdout: 0.2,
            nu: 5.0,
            leaf_size: 32,
            max_degree: 50,
            seed: 1,
        };
        let res = aaa_run(&s, &["aaa", "cur-rplu"], &opts).unwrap();
        for r in &res {
            assert!(r.holdout_err < 1e-12, "{}: {}", r.method, r.holdout_err);
        }
        assert_eq!(res[0].rational.len(), 2);
    }
}
