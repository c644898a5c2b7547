//! Replicated estimation sweeps.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! config.txt                     settings the sweep was started with
//! traces/rep_0000_imsa.csv       one trace per replicate and algorithm
//! replicates/rep_0000.csv        summary rows of one finished replicate
//! summary.csv                    all summary rows, by replicate id
//! aggregate.csv                  quantiles per algorithm and parameter
//! ```
//!
//! A replicate file is written only after all of its traces, so its presence
//! marks the replicate as done and a restarted sweep skips it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ExperimentConfig, ModelKind};
use super::diagnostics::rolling_norm_diagnostic;
use crate::estimators::{run_im, run_imsa, run_scoresa, Algorithm, EstimatorError, RunConfig, RunTrace};
use crate::io::{self, load_design_file, write_atomic, IoError};
use crate::model::{GlmmData, Theta};
use crate::rng::{self, purpose};
use crate::simulate::{
    default_salamander_design, gen_booth_hobert, gen_salamander, SalamanderDesign, SimulateError,
    SimulatedData,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(IoError::Io(e))
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(IoError::Csv(e))
    }
}

/// A finished run: its trace and point estimate. The estimate is the final
/// iterate except for IM, where it is the post-burn-in average.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub estimate: Theta,
}

/// Runs `config` with the MALA imputer.
pub fn default_runner(config: &RunConfig, data: &GlmmData) -> Result<RunOutput, EstimatorError> {
    match config.algorithm {
        Algorithm::Im => {
            let run = run_im(config, data)?;
            let estimate = run.estimate.unwrap_or_else(|| run.trace.final_theta.clone());
            Ok(RunOutput {
                trace: run.trace,
                estimate,
            })
        }
        Algorithm::Imsa | Algorithm::ImsaLog => {
            let trace = run_imsa(config, data)?;
            Ok(RunOutput {
                estimate: trace.final_theta.clone(),
                trace,
            })
        }
        Algorithm::ScoreSa => {
            let trace = run_scoresa(config, data)?;
            Ok(RunOutput {
                estimate: trace.final_theta.clone(),
                trace,
            })
        }
    }
}

fn require_seed(config: &ExperimentConfig) -> Result<u64, HarnessError> {
    config
        .seed
        .ok_or_else(|| HarnessError::Config("a seed is required".into()))
}

/// The salamander design of an experiment, or `None` for Booth–Hobert.
pub fn experiment_design(config: &ExperimentConfig) -> Result<Option<SalamanderDesign>, HarnessError> {
    match config.model {
        ModelKind::BoothHobert => Ok(None),
        ModelKind::Salamander => Ok(Some(match &config.design_file {
            Some(path) => load_design_file(path)?,
            None => default_salamander_design(config.design_seed),
        })),
    }
}

/// Dataset of replicate `r`.
pub fn replicate_dataset(
    config: &ExperimentConfig,
    design: Option<&SalamanderDesign>,
    r: usize,
) -> Result<SimulatedData, HarnessError> {
    let seed = rng::derive_seed(require_seed(config)?, &[purpose::REPLICATE, r as u64, purpose::DATASET]);
    match (config.model, design) {
        (ModelKind::BoothHobert, _) => Ok(gen_booth_hobert(
            config.truth.beta[0],
            config.truth.sigma2()[0],
            seed,
        )),
        (ModelKind::Salamander, Some(design)) => Ok(gen_salamander(&config.truth, design, seed)?),
        (ModelKind::Salamander, None) => {
            Err(HarnessError::Config("salamander sweep without a design".into()))
        }
    }
}

/// Starting value of replicate `r` on the σ² scale, drawn uniformly over the
/// init ranges. All algorithms of a replicate share it.
pub fn replicate_init(config: &ExperimentConfig, r: usize) -> Result<Theta, HarnessError> {
    let mut rng = rng::stream(require_seed(config)?, &[purpose::REPLICATE, r as u64, purpose::INIT]);
    let mut draw = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let beta: Vec<f64> = config.init_beta.iter().map(|g| draw(g.lo, g.hi)).collect();
    let sigma2: Vec<f64> = config.init_sigma2.iter().map(|g| draw(g.lo, g.hi)).collect();
    Ok(Theta::from_sigma2(&beta, &sigma2))
}

/// Sampler seed of replicate `r`, shared by its algorithms.
pub fn replicate_run_seed(config: &ExperimentConfig, r: usize) -> Result<u64, HarnessError> {
    Ok(rng::derive_seed(
        require_seed(config)?,
        &[purpose::REPLICATE, r as u64, purpose::SWEEP],
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub replicate: usize,
    pub algorithm: String,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub log_sigma: Vec<f64>,
    /// NaN when the run is shorter than the diagnostic window.
    pub min_rolling_norm: f64,
    pub converged: bool,
    /// Failure tag (`sampler`, `mstep`, `diverged`), if the run halted.
    pub failure: Option<String>,
}

impl SummaryRow {
    /// Value of a named parameter column.
    pub fn parameter(&self, name: &str) -> Option<f64> {
        let (prefix, idx) = name.rsplit_once('_')?;
        let idx = idx.parse::<usize>().ok()?.checked_sub(1)?;
        match prefix {
            "beta" => self.beta.get(idx).copied(),
            "sigma2" => self.sigma2.get(idx).copied(),
            "log_sigma" => self.log_sigma.get(idx).copied(),
            _ => None,
        }
    }
}

/// Parameter columns of summary tables: β, then σ², then log σ.
pub fn parameter_columns(p: usize, k: usize) -> Vec<String> {
    (1..=p)
        .map(|j| format!("beta_{j}"))
        .chain((1..=k).map(|j| format!("sigma2_{j}")))
        .chain((1..=k).map(|j| format!("log_sigma_{j}")))
        .collect()
}

pub fn write_summary<W: std::io::Write>(w: W, rows: &[SummaryRow], p: usize, k: usize) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["replicate".to_string(), "algorithm".to_string()];
    header.extend(parameter_columns(p, k));
    header.extend(["min_rolling_norm", "converged", "failure"].map(String::from));
    csv.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.replicate.to_string(), row.algorithm.clone()];
        rec.extend(row.beta.iter().chain(&row.sigma2).chain(&row.log_sigma).map(|v| v.to_string()));
        rec.push(row.min_rolling_norm.to_string());
        rec.push(row.converged.to_string());
        rec.push(row.failure.clone().unwrap_or_default());
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_summary<R: std::io::Read>(r: R) -> Result<(Vec<SummaryRow>, usize, usize), HarnessError> {
    let mut csv = csv::Reader::from_reader(r);
    let headers = csv.headers()?.clone();
    let bad = |m: String| HarnessError::Io(IoError::Parse { line: 1, message: m });
    let names: Vec<&str> = headers.iter().collect();
    let p = names.iter().filter(|n| n.starts_with("beta_")).count();
    let k = names.iter().filter(|n| n.starts_with("sigma2_")).count();
    let mut expected = vec!["replicate".to_string(), "algorithm".to_string()];
    expected.extend(parameter_columns(p, k));
    expected.extend(["min_rolling_norm", "converged", "failure"].map(String::from));
    if names != expected {
        return Err(bad(format!("unexpected summary header {}", names.join(","))));
    }
    let mut rows = Vec::new();
    for (idx, rec) in csv.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let perr = |m: String| HarnessError::Io(IoError::Parse { line, message: m });
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| perr(format!("{}: {e}", &headers[i])));
        let nums = |range: std::ops::Range<usize>| range.map(num).collect::<Result<Vec<_>, _>>();
        let base = 2;
        rows.push(SummaryRow {
            replicate: rec[0].parse().map_err(|e| perr(format!("replicate: {e}")))?,
            algorithm: rec[1].to_string(),
            beta: nums(base..base + p)?,
            sigma2: nums(base + p..base + p + k)?,
            log_sigma: nums(base + p + k..base + p + 2 * k)?,
            min_rolling_norm: num(base + p + 2 * k)?,
            converged: rec[base + p + 2 * k + 1]
                .parse()
                .map_err(|e| perr(format!("converged: {e}")))?,
            failure: Some(rec[base + p + 2 * k + 2].to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok((rows, p, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algorithm: String,
    pub parameter: String,
    /// Runs with a finite value for this parameter.
    pub n: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Quantile of sorted data with linear interpolation between order
/// statistics at position (n − 1)·prob.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (sorted.len() - 1) as f64 * prob;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile table over all rows, failed runs included when their final
/// values are finite. Algorithms appear in the order given.
pub fn aggregate(rows: &[SummaryRow], algorithms: &[String], p: usize, k: usize) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for alg in algorithms {
        for param in parameter_columns(p, k) {
            let mut values: Vec<f64> = rows
                .iter()
                .filter(|r| &r.algorithm == alg)
                .filter_map(|r| r.parameter(&param))
                .filter(|v| v.is_finite())
                .collect();
            values.sort_by(f64::total_cmp);
            out.push(AggregateRow {
                algorithm: alg.clone(),
                parameter: param,
                n: values.len(),
                min: quantile_sorted(&values, 0.0),
                q25: quantile_sorted(&values, 0.25),
                median: quantile_sorted(&values, 0.5),
                q75: quantile_sorted(&values, 0.75),
                max: quantile_sorted(&values, 1.0),
            });
        }
    }
    out
}

pub fn write_aggregate<W: std::io::Write>(w: W, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["algorithm", "parameter", "n", "min", "q25", "median", "q75", "max"])?;
    for r in rows {
        csv.write_record([
            r.algorithm.clone(),
            r.parameter.clone(),
            r.n.to_string(),
            r.min.to_string(),
            r.q25.to_string(),
            r.median.to_string(),
            r.q75.to_string(),
            r.max.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_aggregate<R: std::io::Read>(r: R) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut csv = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (idx, rec) in csv.records().enumerate() {
        let rec = rec?;
        let perr = |m: String| HarnessError::Io(IoError::Parse { line: idx + 2, message: m });
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| perr(e.to_string()));
        rows.push(AggregateRow {
            algorithm: rec[0].to_string(),
            parameter: rec[1].to_string(),
            n: rec[2].parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
            min: num(3)?,
            q25: num(4)?,
            median: num(5)?,
            q75: num(6)?,
            max: num(7)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Ordered by replicate id, then by the configured algorithm order.
    pub rows: Vec<SummaryRow>,
    pub aggregate: Vec<AggregateRow>,
    pub failed_runs: usize,
    /// Replicates read back from checkpoints instead of being run.
    pub resumed_replicates: usize,
}

pub fn trace_path(dir: &Path, replicate: usize, label: &str) -> PathBuf {
    dir.join("traces").join(format!("rep_{replicate:04}_{label}.csv"))
}

fn replicate_path(dir: &Path, replicate: usize) -> PathBuf {
    dir.join("replicates").join(format!("rep_{replicate:04}.csv"))
}

pub fn run_replicates(config: &ExperimentConfig) -> Result<SweepOutcome, HarnessError> {
    run_replicates_with(config, default_runner)
}

/// The sweep with a caller-supplied run function in place of
/// [`default_runner`].
pub fn run_replicates_with<F>(config: &ExperimentConfig, runner: F) -> Result<SweepOutcome, HarnessError>
where
    F: Fn(&RunConfig, &GlmmData) -> Result<RunOutput, EstimatorError> + Sync,
{
    config.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    require_seed(config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir.join("traces"))?;
    fs::create_dir_all(dir.join("replicates"))?;

    let settings = config.to_text();
    let settings_path = dir.join("config.txt");
    match fs::read_to_string(&settings_path) {
        Ok(existing) if existing != settings => {
            return Err(HarnessError::Resume(format!(
                "{} holds a different configuration",
                settings_path.display()
            )))
        }
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            write_atomic(&settings_path, settings.as_bytes())?
        }
        Err(e) => return Err(e.into()),
    }

    let design = experiment_design(config)?;
    let (p, k) = (config.truth.p(), config.truth.k());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let per_replicate: Vec<(Vec<SummaryRow>, bool)> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| -> Result<_, HarnessError> {
                let checkpoint = replicate_path(dir, r);
                if checkpoint.exists() {
                    let (rows, cp, ck) = read_summary(fs::File::open(&checkpoint)?)?;
                    if cp != p || ck != k || rows.len() != config.algorithms.len() {
                        return Err(HarnessError::Resume(format!(
                            "{} does not match the configuration",
                            checkpoint.display()
                        )));
                    }
                    return Ok((rows, true));
                }
                let rows = run_one_replicate(config, design.as_ref(), r, &runner)?;
                let mut buf = Vec::new();
                write_summary(&mut buf, &rows, p, k)?;
                write_atomic(&checkpoint, &buf)?;
                Ok((rows, false))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let resumed_replicates = per_replicate.iter().filter(|(_, resumed)| *resumed).count();
    let rows: Vec<SummaryRow> = per_replicate.into_iter().flat_map(|(rows, _)| rows).collect();
    let labels: Vec<String> = config.algorithms.iter().map(|a| a.label.clone()).collect();
    let aggregate = aggregate(&rows, &labels, p, k);

    let mut buf = Vec::new();
    write_summary(&mut buf, &rows, p, k)?;
    write_atomic(&dir.join("summary.csv"), &buf)?;
    let mut buf = Vec::new();
    write_aggregate(&mut buf, &aggregate)?;
    write_atomic(&dir.join("aggregate.csv"), &buf)?;

    Ok(SweepOutcome {
        failed_runs: rows.iter().filter(|r| r.failure.is_some()).count(),
        rows,
        aggregate,
        resumed_replicates,
    })
}

fn run_one_replicate<F>(
    config: &ExperimentConfig,
    design: Option<&SalamanderDesign>,
    r: usize,
    runner: &F,
) -> Result<Vec<SummaryRow>, HarnessError>
where
    F: Fn(&RunConfig, &GlmmData) -> Result<RunOutput, EstimatorError>,
{
    let sim = replicate_dataset(config, design, r)?;
    let init = replicate_init(config, r)?;
    let seed = replicate_run_seed(config, r)?;
    let mut rows = Vec::with_capacity(config.algorithms.len());
    for spec in &config.algorithms {
        let run_config = config.run.run_config(spec, init.clone(), seed);
        let output = runner(&run_config, &sim.data)?;
        write_atomic(
            &trace_path(&config.output_dir, r, &spec.label),
            &io::trace_csv_bytes(&output.trace),
        )?;
        let diag = rolling_norm_diagnostic(&output.trace.update_norms, config.window, config.threshold).ok();
        rows.push(SummaryRow {
            replicate: r,
            algorithm: spec.label.clone(),
            beta: output.estimate.beta.iter().copied().collect(),
            sigma2: output.estimate.sigma2().iter().copied().collect(),
            log_sigma: output.estimate.log_sigma().iter().copied().collect(),
            min_rolling_norm: diag.as_ref().map_or(f64::NAN, |d| d.min_rolling),
            converged: diag.as_ref().is_some_and(|d| d.converged),
            failure: output.trace.failure.as_ref().map(|f| f.kind.tag().to_string()),
        });
    }
    Ok(rows)
}
