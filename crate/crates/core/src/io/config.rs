//! Run configuration and input descriptors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cauchy::CauchyLikeMatrix;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rational::SampleSet;
use crate::rng::RngState;
use crate::accessor::SparseMatrix;

use super::generators::{
    gaussian_kernel, gaussian_points, geometric_spectrum, loewner_samples, smiley_points, two_spiral_points,
    DriftedGaussianToeplitz, SampleDomain, SampleFunction, ToeplitzParams,
};
use super::mm::read_matrix_market;
use super::tables::{read_dense_binary, read_dense_csv, read_samples};

/// Where the input comes from: a file, or a generator family with
/// `key=value` parameters. In JSON it is written as the same string the
/// CLI accepts; the tagged object form is also read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InputSpecRepr", into = "String")]
pub enum InputSpec {
    File(PathBuf),
    Generator {
        family: String,
        params: BTreeMap<String, String>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputSpecRepr {
    Text(String),
    Tagged(TaggedInput),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum TaggedInput {
    File(PathBuf),
    Generator {
        family: String,
        #[serde(default)]
        params: BTreeMap<String, String>,
    },
}

impl TryFrom<InputSpecRepr> for InputSpec {
    type Error = Error;

    fn try_from(r: InputSpecRepr) -> Result<Self> {
        match r {
            InputSpecRepr::Text(s) => Self::parse(&s),
            InputSpecRepr::Tagged(TaggedInput::File(p)) => Ok(Self::File(p)),
            InputSpecRepr::Tagged(TaggedInput::Generator { family, params }) => Ok(Self::Generator { family, params }),
        }
    }
}

impl From<InputSpec> for String {
    fn from(s: InputSpec) -> String {
        s.to_string()
    }
}

pub const GENERATOR_FAMILIES: [&str; 6] = [
    "geometric-spectrum",
    "gaussian-kernel-points",
    "smiley-cauchy",
    "spiral-cauchy",
    "drifted-gaussian-toeplitz-1d",
    "loewner-samples",
];

impl InputSpec {
    /// Parses `family:key=value,key=value` or a file path.
    pub fn parse(s: &str) -> Result<Self> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        if !GENERATOR_FAMILIES.contains(&family) {
            return Ok(Self::File(PathBuf::from(s)));
        }
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("generator parameter `{kv}` is not key=value")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self::Generator {
            family: family.to_string(),
            params,
        })
    }
}

impl std::fmt::Display for InputSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::File(p) => write!(f, "{}", p.display()),
            Self::Generator { family, params } => {
                let kv: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, "{family}:{}", kv.join(","))
            }
        }
    }
}

/// A loaded input.
pub enum Loaded {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
    Toeplitz(DriftedGaussianToeplitz),
    Cauchy(CauchyLikeMatrix),
    Samples(SampleSet),
}

impl Loaded {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dense(_) => "dense",
            Self::Sparse(_) => "sparse",
            Self::Toeplitz(_) => "toeplitz",
            Self::Cauchy(_) => "cauchy",
            Self::Samples(_) => "samples",
        }
    }
}

struct Params<'a> {
    family: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::InvalidArgument(format!("{}: cannot parse `{key}={v}`", self.family))
            }),
        }
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "{}: unknown parameter `{k}` (known: {})",
                    self.family,
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Runs a generator family. Every family reads `seed` from its parameters
/// when present and falls back to `seed` otherwise.
pub fn generate(family: &str, params: &BTreeMap<String, String>, seed: u64) -> Result<Loaded> {
    let p = Params { family, map: params };
    let mut rng = RngState::new(p.get("seed", seed)?);
    match family {
        "geometric-spectrum" => {
            p.check_known(&["n", "rho", "seed"])?;
            Ok(Loaded::Dense(geometric_spectrum(p.get("n", 100)?, p.get("rho", 0.5)?, &mut rng)?))
        }
        "gaussian-kernel-points" => {
            p.check_known(&["n", "dim", "seed"])?;
            let pts = gaussian_points(p.get("n", 200)?, p.get("dim", 3)?, &mut rng);
            Ok(Loaded::Dense(gaussian_kernel(&pts)?))
        }
        "smiley-cauchy" => {
            p.check_known(&["n", "m", "seed"])?;
            let n = p.get("n", 400)?;
            let (x, y) = smiley_points(n, p.get("m", n)?, &mut rng);
            Ok(Loaded::Cauchy(CauchyLikeMatrix::cauchy(x, y)?))
        }
        "spiral-cauchy" => {
            p.check_known(&["n", "outliers", "gap", "seed"])?;
            let n = p.get("n", 400)?;
            let (x, y) = two_spiral_points(n, p.get("outliers", n / 6)?, p.get("gap", super::DEFAULT_SPIRAL_GAP)?, &mut rng)?;
            Ok(Loaded::Cauchy(CauchyLikeMatrix::cauchy(x, y)?))
        }
        "drifted-gaussian-toeplitz-1d" => {
            p.check_known(&["n", "span", "delta", "sigma", "weight"])?;
            let n = p.get("n", 256)?;
            let base = ToeplitzParams::scaled(n, p.get("span", 320.0)?);
            let tp = ToeplitzParams {
                delta: p.get("delta", base.delta)?,
                sigma: p.get("sigma", base.sigma)?,
                weight: p.get("weight", 1.0)?,
                ..base
            };
            Ok(Loaded::Toeplitz(DriftedGaussianToeplitz::new(tp)?))
        }
        "loewner-samples" => {
            p.check_known(&["n", "f", "domain", "seed"])?;
            let f = SampleFunction::parse(&p.get("f", "tan4".to_string())?)?;
            let dom = SampleDomain::parse(&p.get("domain", "interval".to_string())?)?;
            Ok(Loaded::Samples(loewner_samples(f, p.get("n", 2000)?, dom, &mut rng)?))
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown generator `{other}` (known: {})",
            GENERATOR_FAMILIES.join(", ")
        ))),
    }
}

/// Loads a file by extension: `.mtx` (Matrix Market), `.bin` (dense
/// binary), `.csv` (dense CSV, or a sample set when `samples` is set).
pub fn load_file(path: &Path, samples: bool) -> Result<Loaded> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match (ext, samples) {
        ("mtx", false) => Ok(Loaded::Sparse(read_matrix_market(path)?.matrix)),
        ("bin", false) => Ok(Loaded::Dense(read_dense_binary(path)?)),
        ("csv", false) => Ok(Loaded::Dense(read_dense_csv(path)?)),
        ("csv", true) => Ok(Loaded::Samples(read_samples(path)?)),
        _ => Err(Error::InvalidArgument(format!(
            "cannot infer the format of `{}`",
            path.display()
        ))),
    }
}

pub fn load(spec: &InputSpec, seed: u64, samples: bool) -> Result<Loaded> {
    match spec {
        InputSpec::File(p) => load_file(p, samples),
        InputSpec::Generator { family, params } => generate(family, params, seed),
    }
}

/// Algorithms a [`RunConfig`] can name.
pub const ALGORITHMS: [&str; 17] = [
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
    "aaa",
    "cur-rplu",
    "cur-c2plu",
];

fn default_nu() -> f64 {
    crate::cauchy::DEFAULT_NU
}

fn default_leaf() -> usize {
    crate::tree::DEFAULT_LEAF_SIZE
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: String,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_leaf")]
    pub leaf_size: usize,
    pub input: InputSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(algorithm: &str, input: InputSpec) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            rank: None,
            tol: None,
            seed: 0,
            nu: default_nu(),
            leaf_size: default_leaf(),
            input,
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Checks the fields the algorithm needs.
    pub fn validate(&self) -> Result<()> {
        let a = self.algorithm.as_str();
        if !ALGORITHMS.contains(&a) {
            return Err(Error::InvalidArgument(format!(
                "unknown algorithm `{a}` (known: {})",
                ALGORITHMS.join(", ")
            )));
        }
        let needs_tol = matches!(a, "cauchy-rplu" | "cauchy-c2plu" | "aaa" | "cur-rplu" | "cur-c2plu");
        if needs_tol {
            match self.tol {
                Some(t) if t > 0.0 && t.is_finite() => {}
                _ => return Err(Error::InvalidArgument(format!("`{a}` needs a positive `tol`"))),
            }
        } else if self.rank.is_none() {
            return Err(Error::InvalidArgument(format!("`{a}` needs a `rank`")));
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument("`tol` must be finite and nonnegative".into()));
            }
        }
        if !(self.nu >= 1.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument("`nu` must be at least 1".into()));
        }
        if self.leaf_size == 0 {
            return Err(Error::InvalidArgument("`leaf_size` must be at least 1".into()));
        }
        if let InputSpec::Generator { family, .. } = &self.input {
            if !GENERATOR_FAMILIES.contains(&family.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown generator `{family}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_generator_and_file() {
        let s = InputSpec::parse("geometric-spectrum:n=50,rho=0.4").unwrap();
        match &s {
            InputSpec::Generator { family, params } => {
                assert_eq!(family, "geometric-spectrum");
                assert_eq!(params["rho"], "0.4");
            }
            _ => panic!("expected generator"),
        }
        assert_eq!(s.to_string(), "geometric-spectrum:n=50,rho=0.4");
        assert_eq!(InputSpec::parse("a/b.mtx").unwrap(), InputSpec::File("a/b.mtx".into()));
        assert!(InputSpec::parse("geometric-spectrum:n").is_err());
    }

    #[test]
    fn config_json_roundtrip_and_defaults() {
        let c = RunConfig::from_json(
            r#"{"algorithm":"rplu","rank":10,"input":{"generator":{"family":"geometric-spectrum","params":{"n":"40"}}}}"#,
        )
        .unwrap();
        assert_eq!(c.nu, 5.0);
        assert_eq!(c.leaf_size, 32);
        assert_eq!(c.seed, 0);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(c.to_json().contains(r#""input":"geometric-spectrum:n=40""#));
        let d = RunConfig::from_json(r#"{"algorithm":"rplu","rank":10,"input":"geometric-spectrum:n=40"}"#).unwrap();
        assert_eq!(d, c);
    }

    #[test]
    fn validation_errors() {
        let g = InputSpec::parse("loewner-samples").unwrap();
        assert!(RunConfig::new("aaa", g.clone()).validate().is_err());
        assert!(RunConfig::new("rplu", g.clone()).validate().is_err());
        assert!(RunConfig::new("nope", g.clone()).validate().is_err());
        let mut c = RunConfig::new("aaa", g);
        c.tol = Some(1e-10);
        c.validate().unwrap();
        c.nu = 0.5;
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json(r#"{"algorithm":"rplu","rank":1,"input":{"file":"x"},"bogus":1}"#).is_err());
    }

    #[test]
    fn unknown_generator_parameter() {
        let mut p = BTreeMap::new();
        p.insert("size".to_string(), "3".to_string());
        assert!(generate("geometric-spectrum", &p, 0).is_err());
    }
}
