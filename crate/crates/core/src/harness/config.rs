//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated and
//! ranges are written `lo:hi`. Later assignments override earlier ones, which
//! is how command-line overrides are layered over a file.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::estimators::{Algorithm, RunConfig, StepSchedule, VarianceSchedules};
use crate::model::Theta;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{0}")]
    Invalid(String),
}

fn value_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Splits config text into ordered (key, value) pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                message: "empty key".into(),
            });
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses a command-line override of the form `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Invalid(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| value_err(key, format!("`{v}`: {e}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(value_err(key, format!("`{v}` is not a boolean"))),
    }
}

/// `harmonic`, `capped:<t0>` or `constant:<c>`.
pub fn parse_schedule(key: &str, v: &str) -> Result<StepSchedule, ConfigError> {
    match v.split_once(':') {
        None if v == "harmonic" => Ok(StepSchedule::Harmonic),
        Some(("capped", t0)) => {
            let t0: u32 = parse_num(key, t0)?;
            if t0 == 0 {
                return Err(value_err(key, "t0 must be at least 1"));
            }
            Ok(StepSchedule::Capped { t0 })
        }
        Some(("constant", c)) => Ok(StepSchedule::Constant(parse_num(key, c)?)),
        _ => Err(value_err(
            key,
            format!("`{v}` is not harmonic, capped:<t0> or constant:<c>"),
        )),
    }
}

pub fn format_schedule(s: StepSchedule) -> String {
    match s {
        StepSchedule::Harmonic => "harmonic".into(),
        StepSchedule::Capped { t0 } => format!("capped:{t0}"),
        StepSchedule::Constant(c) => format!("constant:{c}"),
    }
}

/// t₀ of the named ScoreSA presets `scoresa-1` … `scoresa-6`.
pub const SCORESA_T0: [u32; 6] = [1, 5, 10, 25, 50, 100];

/// An algorithm with its gain schedule, under a label used in file names
/// and tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
}

impl AlgorithmSpec {
    /// `im`, `imsa`, `imsa-log`, `scoresa` (harmonic) or `scoresa-1` …
    /// `scoresa-6`.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (algorithm, schedule) = match name {
            "im" => (Algorithm::Im, StepSchedule::Constant(1.0)),
            "imsa" => (Algorithm::Imsa, StepSchedule::Harmonic),
            "imsa-log" => (Algorithm::ImsaLog, StepSchedule::Harmonic),
            "scoresa" => (Algorithm::ScoreSa, StepSchedule::Harmonic),
            _ => {
                let t0 = name
                    .strip_prefix("scoresa-")
                    .and_then(|i| i.parse::<usize>().ok())
                    .filter(|i| (1..=SCORESA_T0.len()).contains(i))
                    .map(|i| SCORESA_T0[i - 1])
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown algorithm `{name}`")))?;
                (Algorithm::ScoreSa, StepSchedule::Capped { t0 })
            }
        };
        Ok(Self {
            label: name.to_string(),
            algorithm,
            schedule,
        })
    }
}

/// The RunConfig fields shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub iterations: usize,
    pub chains: usize,
    pub mcmc_steps: usize,
    pub precondition_after: usize,
    pub target_accept: f64,
    pub initial_step_size: f64,
    pub adapt_every: usize,
    pub burn_in: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        let d = RunConfig::new(Algorithm::Imsa, Theta::from_sigma2(&[0.0], &[1.0]), 0);
        Self {
            iterations: d.iterations,
            chains: d.chains,
            mcmc_steps: d.mcmc_steps,
            precondition_after: d.precondition_after,
            target_accept: d.target_accept,
            initial_step_size: d.initial_step_size,
            adapt_every: d.adapt_every,
            burn_in: d.burn_in,
        }
    }
}

impl RunSettings {
    /// Applies `key = value` if the key belongs to run settings.
    fn apply(&mut self, key: &str, v: &str) -> Result<bool, ConfigError> {
        match key {
            "iterations" => self.iterations = parse_num(key, v)?,
            "chains" => self.chains = parse_num(key, v)?,
            "mcmc_steps" => self.mcmc_steps = parse_num(key, v)?,
            "precondition_after" => self.precondition_after = parse_num(key, v)?,
            "target_accept" => self.target_accept = parse_num(key, v)?,
            "initial_step_size" => self.initial_step_size = parse_num(key, v)?,
            "adapt_every" => self.adapt_every = parse_num(key, v)?,
            "burn_in" => {
                self.burn_in = if v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "chains = {}", self.chains);
        let _ = writeln!(out, "mcmc_steps = {}", self.mcmc_steps);
        let _ = writeln!(out, "precondition_after = {}", self.precondition_after);
        let _ = writeln!(out, "target_accept = {}", self.target_accept);
        let _ = writeln!(out, "initial_step_size = {}", self.initial_step_size);
        let _ = writeln!(out, "adapt_every = {}", self.adapt_every);
        match self.burn_in {
            Some(b) => {
                let _ = writeln!(out, "burn_in = {b}");
            }
            None => {
                let _ = writeln!(out, "burn_in = auto");
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.chains == 0 {
            return bad("chains must be at least 1");
        }
        if self.mcmc_steps == 0 {
            return bad("mcmc_steps must be at least 1");
        }
        if self.adapt_every == 0 {
            return bad("adapt_every must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            return bad("initial_step_size must be positive");
        }
        Ok(())
    }

    pub fn run_config(&self, spec: &AlgorithmSpec, theta_init: Theta, seed: u64) -> RunConfig {
        let theta_init = theta_init.to_scale(spec.algorithm.scale());
        RunConfig {
            algorithm: spec.algorithm,
            schedule: spec.schedule,
            iterations: self.iterations,
            chains: self.chains,
            mcmc_steps: self.mcmc_steps,
            precondition_after: self.precondition_after,
            target_accept: self.target_accept,
            initial_step_size: self.initial_step_size,
            adapt_every: self.adapt_every,
            seed,
            theta_init,
            burn_in: self.burn_in,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BoothHobert,
    Salamander,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "booth-hobert" => Ok(Self::BoothHobert),
            "salamander" => Ok(Self::Salamander),
            _ => Err(value_err("model", format!("`{s}` is not booth-hobert or salamander"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BoothHobert => "booth-hobert",
            Self::Salamander => "salamander",
        }
    }
}

/// Uniform dispersal interval (lo, hi) for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitRange {
    pub lo: f64,
    pub hi: f64,
}

fn parse_ranges(key: &str, v: &str) -> Result<Vec<InitRange>, ConfigError> {
    v.split(',')
        .map(|r| {
            let (lo, hi) = r
                .trim()
                .split_once(':')
                .ok_or_else(|| value_err(key, format!("`{r}` is not lo:hi")))?;
            Ok(InitRange {
                lo: parse_num(key, lo.trim())?,
                hi: parse_num(key, hi.trim())?,
            })
        })
        .collect()
}

fn join<T, F: Fn(&T) -> String>(items: &[T], f: F) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Generator truth, σ² scale.
    pub truth: Theta,
    pub replicates: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    pub run: RunSettings,
    pub init_beta: Vec<InitRange>,
    pub init_sigma2: Vec<InitRange>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// Rolling-norm diagnostic window and threshold.
    pub window: usize,
    pub threshold: f64,
    /// Salamander only: user-supplied design CSV; otherwise the default
    /// design drawn with `design_seed`.
    pub design_file: Option<PathBuf>,
    pub design_seed: u64,
}

const ALL_PRESETS: [&str; 8] = [
    "imsa",
    "imsa-log",
    "scoresa-1",
    "scoresa-2",
    "scoresa-3",
    "scoresa-4",
    "scoresa-5",
    "scoresa-6",
];

impl ExperimentConfig {
    pub fn booth_hobert() -> Self {
        let run = RunSettings {
            iterations: 2000,
            ..RunSettings::default()
        };
        Self {
            model: ModelKind::BoothHobert,
            truth: Theta::from_sigma2(&[5.0], &[0.5]),
            replicates: 20,
            algorithms: ALL_PRESETS.iter().map(|n| AlgorithmSpec::preset(n).unwrap()).collect(),
            run,
            init_beta: vec![InitRange { lo: 1.0, hi: 2.0 }],
            init_sigma2: vec![InitRange { lo: 0.5, hi: 1.5 }],
            seed: None,
            output_dir: PathBuf::from("out"),
            workers: 4,
            window: 250,
            threshold: 0.05,
            design_file: None,
            design_seed: 0,
        }
    }

    pub fn salamander() -> Self {
        let r = |lo, hi| InitRange { lo, hi };
        Self {
            model: ModelKind::Salamander,
            truth: Theta::from_sigma2(&[1.03, 0.32, -1.95, 0.99], &[1.4, 1.25]),
            replicates: 5,
            run: RunSettings {
                iterations: 4000,
                ..RunSettings::default()
            },
            init_beta: vec![r(0.0, 2.0), r(-1.0, 1.0), r(-3.0, -1.0), r(0.0, 2.0)],
            init_sigma2: vec![r(1.0, 2.5), r(1.0, 2.5)],
            ..Self::booth_hobert()
        }
    }

    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::BoothHobert => Self::booth_hobert(),
            ModelKind::Salamander => Self::salamander(),
        }
    }

    /// Builds a config from ordered pairs. `model` is resolved first and
    /// selects the defaults; the remaining keys are applied in order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let model = match pairs.iter().rev().find(|(k, _)| k == "model") {
            Some((_, v)) => ModelKind::parse(v)?,
            None => ModelKind::BoothHobert,
        };
        let mut cfg = Self::for_model(model);
        for (k, v) in pairs {
            cfg.apply(k, v)?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut pairs = parse_pairs(text)?;
        pairs.extend_from_slice(overrides);
        let cfg = Self::from_pairs(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        if self.run.apply(key, v)? {
            return Ok(());
        }
        match key {
            "model" => {}
            "truth.beta" => {
                self.truth = Theta::new(
                    parse_list(key, v)?.into(),
                    self.truth.var_components.clone(),
                    self.truth.scale,
                )
            }
            "truth.sigma2" => {
                self.truth =
                    Theta::new(self.truth.beta.clone(), parse_list(key, v)?.into(), self.truth.scale)
            }
            "replicates" => self.replicates = parse_num(key, v)?,
            "algorithms" => {
                self.algorithms = v
                    .split(',')
                    .map(|s| AlgorithmSpec::preset(s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "init.beta" => self.init_beta = parse_ranges(key, v)?,
            "init.sigma2" => self.init_sigma2 = parse_ranges(key, v)?,
            "seed" => self.seed = Some(parse_num(key, v)?),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "workers" => self.workers = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "threshold" => self.threshold = parse_num(key, v)?,
            "design" => {
                self.design_file = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "design_seed" => self.design_seed = parse_num(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.run.validate()?;
        let (p, k) = match self.model {
            ModelKind::BoothHobert => (1, 1),
            ModelKind::Salamander => (4, 2),
        };
        if self.truth.p() != p || self.truth.k() != k {
            return bad(format!(
                "{} truth needs {p} beta and {k} sigma2 values",
                self.model.name()
            ));
        }
        if let Err(e) = self.truth.validate() {
            return bad(format!("truth: {e}"));
        }
        if self.init_beta.len() != p || self.init_sigma2.len() != k {
            return bad(format!(
                "{} init ranges need {p} beta and {k} sigma2 intervals",
                self.model.name()
            ));
        }
        for r in &self.init_beta {
            if !(r.lo < r.hi && r.lo.is_finite() && r.hi.is_finite()) {
                return bad(format!("init.beta interval {}:{} is empty", r.lo, r.hi));
            }
        }
        for r in &self.init_sigma2 {
            if !(r.lo < r.hi && r.lo >= 0.0 && r.hi.is_finite()) {
                return bad(format!(
                    "init.sigma2 interval {}:{} must satisfy 0 <= lo < hi",
                    r.lo, r.hi
                ));
            }
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty".into());
        }
        let mut labels: Vec<&str> = self.algorithms.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.algorithms.len() {
            return bad("algorithms contains duplicates".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        Ok(())
    }

    /// Settings that determine the numbers in the output, as config text.
    /// `output_dir` and `workers` are left out since they do not.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model = {}", self.model.name());
        let _ = writeln!(out, "truth.beta = {}", join(self.truth.beta.as_slice(), |v| v.to_string()));
        let _ = writeln!(
            out,
            "truth.sigma2 = {}",
            join(self.truth.sigma2().as_slice(), |v| v.to_string())
        );
        let _ = writeln!(out, "replicates = {}", self.replicates);
        let _ = writeln!(out, "algorithms = {}", join(&self.algorithms, |a| a.label.clone()));
        self.run.write(&mut out);
        let range = |r: &InitRange| format!("{}:{}", r.lo, r.hi);
        let _ = writeln!(out, "init.beta = {}", join(&self.init_beta, range));
        let _ = writeln!(out, "init.sigma2 = {}", join(&self.init_sigma2, range));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "window = {}", self.window);
        let _ = writeln!(out, "threshold = {}", self.threshold);
        if let Some(d) = &self.design_file {
            let _ = writeln!(out, "design = {}", d.display());
        }
        let _ = writeln!(out, "design_seed = {}", self.design_seed);
        out
    }
}

/// Configuration of a single `fit` run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub algorithm: AlgorithmSpec,
    pub run: RunSettings,
    /// σ² scale; `None` starts from β = 0, σ² = 1.
    pub theta_init_beta: Option<Vec<f64>>,
    pub theta_init_sigma2: Option<Vec<f64>>,
    pub seed: u64,
    /// Single-chain IMSA with the online variance estimate.
    pub variance: bool,
    pub variance_schedules: VarianceSchedules,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmSpec::preset("imsa").unwrap(),
            run: RunSettings::default(),
            theta_init_beta: None,
            theta_init_sigma2: None,
            seed: 0,
            variance: false,
            variance_schedules: VarianceSchedules::default(),
        }
    }
}

impl FitConfig {
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut pairs = parse_pairs(text)?;
        pairs.extend_from_slice(overrides);
        let mut cfg = Self::default();
        let mut schedule = None;
        for (k, v) in &pairs {
            let (k, v) = (k.as_str(), v.as_str());
            if cfg.run.apply(k, v)? {
                continue;
            }
            match k {
                "algorithm" => cfg.algorithm = AlgorithmSpec::preset(v)?,
                "schedule" => schedule = Some(parse_schedule(k, v)?),
                "theta_init.beta" => cfg.theta_init_beta = Some(parse_list(k, v)?),
                "theta_init.sigma2" => cfg.theta_init_sigma2 = Some(parse_list(k, v)?),
                "seed" => cfg.seed = parse_num(k, v)?,
                "variance" => cfg.variance = parse_bool(k, v)?,
                "variance.rho" => cfg.variance_schedules.rho = parse_schedule(k, v)?,
                "variance.lambda" => cfg.variance_schedules.lambda = parse_schedule(k, v)?,
                "variance.nu" => cfg.variance_schedules.nu = parse_schedule(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.to_string())),
            }
        }
        if let Some(s) = schedule {
            cfg.algorithm.schedule = s;
        }
        cfg.run.validate()?;
        Ok(cfg)
    }

    /// Starting value on the σ² scale for a model with p fixed effects and
    /// K variance components.
    pub fn theta_init(&self, p: usize, k: usize) -> Result<Theta, ConfigError> {
        let beta = self.theta_init_beta.clone().unwrap_or_else(|| vec![0.0; p]);
        let sigma2 = self.theta_init_sigma2.clone().unwrap_or_else(|| vec![1.0; k]);
        if beta.len() != p || sigma2.len() != k {
            return Err(ConfigError::Invalid(format!(
                "theta_init needs {p} beta and {k} sigma2 values"
            )));
        }
        let theta = Theta::from_sigma2(&beta, &sigma2);
        theta
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("theta_init: {e}")))?;
        Ok(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_comments_and_errors() {
        let pairs = parse_pairs("# c\n a = 1 # trailing\n\nb=x, y\n").unwrap();
        assert_eq!(
            pairs,
            vec![("a".into(), "1".into()), ("b".into(), "x, y".into())]
        );
        assert!(matches!(parse_pairs("oops"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn presets() {
        for (i, t0) in SCORESA_T0.iter().enumerate() {
            let spec = AlgorithmSpec::preset(&format!("scoresa-{}", i + 1)).unwrap();
            assert_eq!(spec.schedule, StepSchedule::Capped { t0: *t0 });
            assert_eq!(spec.algorithm, Algorithm::ScoreSa);
        }
        assert!(AlgorithmSpec::preset("scoresa-7").is_err());
        assert_eq!(AlgorithmSpec::preset("imsa-log").unwrap().algorithm, Algorithm::ImsaLog);
    }

    #[test]
    fn overrides_apply_after_file() {
        let cfg = ExperimentConfig::parse(
            "replicates = 3\niterations = 100\nalgorithms = imsa, scoresa-4\n",
            &[("iterations".into(), "50".into())],
        )
        .unwrap();
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.run.iterations, 50);
        assert_eq!(cfg.algorithms.len(), 2);
    }

    #[test]
    fn model_selects_defaults() {
        let cfg = ExperimentConfig::parse("model = salamander\n", &[]).unwrap();
        assert_eq!(cfg.truth.p(), 4);
        assert_eq!(cfg.run.iterations, 4000);
        assert_eq!(cfg.init_beta[2], InitRange { lo: -3.0, hi: -1.0 });
    }

    #[test]
    fn text_round_trip() {
        let cfg = ExperimentConfig::parse(
            "model = salamander\nseed = 9\ninit.sigma2 = 1:2, 0.5:1.5\nburn_in = 7\n",
            &[],
        )
        .unwrap();
        let back = ExperimentConfig::parse(&cfg.to_text(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs() {
        for text in [
            "replicates = 0",
            "init.beta = 2:1",
            "init.sigma2 = -1:1",
            "truth.beta = 1, 2",
            "target_accept = 1.5",
            "algorithms = imsa, imsa",
            "colour = blue",
            "iterations = many",
        ] {
            assert!(ExperimentConfig::parse(text, &[]).is_err(), "{text}");
        }
    }

    #[test]
    fn fit_config() {
        let cfg = FitConfig::parse(
            "algorithm = scoresa-2\nschedule = capped:7\ntheta_init.beta = 1.5\nvariance.nu = constant:0.1\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.algorithm.schedule, StepSchedule::Capped { t0: 7 });
        assert_eq!(cfg.variance_schedules.nu, StepSchedule::Constant(0.1));
        assert_eq!(cfg.theta_init(1, 1).unwrap(), Theta::from_sigma2(&[1.5], &[1.0]));
        assert!(cfg.theta_init(2, 1).is_err());
    }
}
