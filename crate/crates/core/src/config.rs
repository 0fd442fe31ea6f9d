//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, no sections. Unknown or
//! repeated keys are errors. Relative file paths are resolved against the
//! directory holding the config file.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `horizon` | 3 | final time `T` |
//! | `step` | 0.01 | grid spacing |
//! | `channels` | 1 | input channels `d` |
//! | `order` | 4 | truncation order for training and control |
//! | `orders` | 1,2,3,4,5 | truncation orders swept by `mc-predict` |
//! | `gamma` | 1e-8 | ridge weight |
//! | `n_train` | 40 | training trajectories per run |
//! | `input_lo`, `input_hi` | 0, 5 | range of the random input samples |
//! | `z0` | 0 | common initial output |
//! | `system` | random | `random` draws `(mu, theta, sigma)` per run, `fixed` uses the keys below |
//! | `mu`, `theta`, `sigma` | 1, 1, 1 | Langevin parameters for `system = fixed` |
//! | `param_lo`, `param_hi` | 0.5, 1.5 | range of randomized parameters |
//! | `substeps` | 1 | Euler steps per grid segment |
//! | `n_mc` | 50 | Monte Carlo runs |
//! | `seed` | 0 | master seed |
//! | `snr_db` | 3.5 | SNR of the warm start perturbation |
//! | `prefixes` | 0.25,0.5,0.75,1 | trajectory fractions tracked by `mc-control` |
//! | `max_iterations`, `gradient_tolerance`, `step_tolerance` | 500, 1e-8, 1e-12 | solver stopping rules |
//! | `out_dir` | out | output directory |
//! | `path`, `dataset`, `model`, `input`, `target`, `init` | - | files used by the single-shot commands |
//! | `u0` | zeros | initial input value used to rebuild a controlled input |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::control::SolverOptions;
use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use crate::sim::{DatasetSpec, LangevinParams};

const KNOWN_KEYS: &[&str] = &[
    "horizon",
    "step",
    "channels",
    "order",
    "orders",
    "gamma",
    "n_train",
    "input_lo",
    "input_hi",
    "z0",
    "system",
    "mu",
    "theta",
    "sigma",
    "param_lo",
    "param_hi",
    "substeps",
    "n_mc",
    "seed",
    "snr_db",
    "prefixes",
    "max_iterations",
    "gradient_tolerance",
    "step_tolerance",
    "out_dir",
    "path",
    "dataset",
    "model",
    "input",
    "target",
    "init",
    "u0",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemChoice {
    /// Parameters drawn uniformly from `[param_lo, param_hi]^3` per run.
    Random { lo: f64, hi: f64 },
    Fixed(LangevinParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub step: f64,
    pub channels: usize,
    pub order: usize,
    pub orders: Vec<usize>,
    pub gamma: f64,
    pub n_train: usize,
    pub input_lo: f64,
    pub input_hi: f64,
    pub z0: f64,
    pub system: SystemChoice,
    pub substeps: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub prefixes: Vec<f64>,
    pub solver: SolverOptions,
    pub out_dir: PathBuf,
    pub path: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub u0: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            step: 0.01,
            channels: 1,
            order: 4,
            orders: vec![1, 2, 3, 4, 5],
            gamma: crate::features::DEFAULT_GAMMA,
            n_train: 40,
            input_lo: 0.0,
            input_hi: 5.0,
            z0: 0.0,
            system: SystemChoice::Random { lo: 0.5, hi: 1.5 },
            substeps: 1,
            n_mc: 50,
            seed: 0,
            snr_db: 3.5,
            prefixes: vec![0.25, 0.5, 0.75, 1.0],
            solver: SolverOptions::default(),
            out_dir: PathBuf::from("out"),
            path: None,
            dataset: None,
            model: None,
            input: None,
            target: None,
            init: None,
            u0: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }

        let mut cfg = Self::default();
        let get = |key: &str| entries.get(key).map(String::as_str);
        let file = |key: &str| get(key).map(|v| base.join(v));

        if let Some(v) = get("horizon") {
            cfg.horizon = parse_value("horizon", v)?;
        }
        if let Some(v) = get("step") {
            cfg.step = parse_value("step", v)?;
        }
        if let Some(v) = get("channels") {
            cfg.channels = parse_value("channels", v)?;
        }
        if let Some(v) = get("order") {
            cfg.order = parse_value("order", v)?;
        }
        if let Some(v) = get("orders") {
            cfg.orders = parse_list("orders", v)?;
        }
        if let Some(v) = get("gamma") {
            cfg.gamma = parse_value("gamma", v)?;
        }
        if let Some(v) = get("n_train") {
            cfg.n_train = parse_value("n_train", v)?;
        }
        if let Some(v) = get("input_lo") {
            cfg.input_lo = parse_value("input_lo", v)?;
        }
        if let Some(v) = get("input_hi") {
            cfg.input_hi = parse_value("input_hi", v)?;
        }
        if let Some(v) = get("z0") {
            cfg.z0 = parse_value("z0", v)?;
        }
        let param = |key: &str, default: f64| -> Result<f64> {
            get(key).map_or(Ok(default), |v| parse_value(key, v))
        };
        cfg.system = match get("system").unwrap_or("random") {
            "random" => SystemChoice::Random {
                lo: param("param_lo", 0.5)?,
                hi: param("param_hi", 1.5)?,
            },
            "fixed" => SystemChoice::Fixed(LangevinParams::new(
                param("mu", 1.0)?,
                param("theta", 1.0)?,
                param("sigma", 1.0)?,
            )?),
            other => {
                return Err(Error::Config(format!(
                    "`system` must be `random` or `fixed`, got {other:?}"
                )))
            }
        };
        if let Some(v) = get("substeps") {
            cfg.substeps = parse_value("substeps", v)?;
        }
        if let Some(v) = get("n_mc") {
            cfg.n_mc = parse_value("n_mc", v)?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = parse_value("seed", v)?;
        }
        if let Some(v) = get("snr_db") {
            cfg.snr_db = parse_value("snr_db", v)?;
        }
        if let Some(v) = get("prefixes") {
            cfg.prefixes = parse_list("prefixes", v)?;
        }
        if let Some(v) = get("max_iterations") {
            cfg.solver.max_iterations = parse_value("max_iterations", v)?;
        }
        if let Some(v) = get("gradient_tolerance") {
            cfg.solver.gradient_tolerance = parse_value("gradient_tolerance", v)?;
        }
        if let Some(v) = get("step_tolerance") {
            cfg.solver.step_tolerance = parse_value("step_tolerance", v)?;
        }
        if let Some(v) = file("out_dir") {
            cfg.out_dir = v;
        }
        cfg.path = file("path");
        cfg.dataset = file("dataset");
        cfg.model = file("model");
        cfg.input = file("input");
        cfg.target = file("target");
        cfg.init = file("init");
        if let Some(v) = get("u0") {
            cfg.u0 = Some(parse_list("u0", v)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let base = file.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.horizon > 0.0 && self.step > 0.0 && self.step <= self.horizon) {
            return fail(format!(
                "need 0 < step <= horizon, got step = {} and horizon = {}",
                self.step, self.horizon
            ));
        }
        if self.channels == 0 {
            return fail("channels must be at least 1".into());
        }
        if self.order == 0 || self.orders.is_empty() || self.orders.contains(&0) {
            return fail("truncation orders must be at least 1".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.n_train == 0 {
            return fail("n_train must be at least 1".into());
        }
        if !(self.input_lo < self.input_hi) {
            return fail(format!(
                "need input_lo < input_hi, got [{}, {}]",
                self.input_lo, self.input_hi
            ));
        }
        if let SystemChoice::Random { lo, hi } = self.system {
            if !(lo > 0.0 && lo < hi) {
                return fail(format!("need 0 < param_lo < param_hi, got [{lo}, {hi}]"));
            }
        }
        if self.substeps == 0 {
            return fail("substeps must be at least 1".into());
        }
        if self.snr_db.is_nan() {
            return fail("snr_db must be a number".into());
        }
        if self.prefixes.is_empty() || self.prefixes.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return fail("prefixes must lie in (0, 1]".into());
        }
        if let Some(u0) = &self.u0 {
            if u0.len() != self.channels {
                return fail(format!(
                    "u0 has {} values for {} channels",
                    u0.len(),
                    self.channels
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.step)
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            grid: self.grid()?,
            n_train: self.n_train,
            input_lo: self.input_lo,
            input_hi: self.input_hi,
            z0: self.z0,
            substeps: self.substeps,
        })
    }

    /// Checks that a file key is present and exists on disk.
    pub fn require_file<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        let path = value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing `{key}`")))?;
        if !path.exists() {
            return Err(Error::Config(format!(
                "`{key}` points to {}, which does not exist",
                path.display()
            )));
        }
        Ok(path)
    }
}
