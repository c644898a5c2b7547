use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use imsa::estimators::{run_imsa_variance, RunTrace};
use imsa::harness::config::{parse_override, ConfigError, ExperimentConfig, FitConfig};
use imsa::harness::sweep::{self, default_runner, experiment_design, HarnessError};
use imsa::harness::rolling_norm_diagnostic;
use imsa::io::{self, describe_theta};
use imsa::model::Scale;
use imsa::oracle::{quadrature_mle, QuadratureRule};

const EXIT_CONFIG: u8 = 1;
const EXIT_FAILED_RUNS: u8 = 2;
const EXIT_FATAL: u8 = 3;

#[derive(Parser)]
#[command(name = "imsa", version, about = "Stochastic-approximation fitting of logistic-normal mixed models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the datasets of an experiment's replicates.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one dataset with one algorithm.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset in the text format.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Algorithm preset, e.g. imsa, imsa-log, im, scoresa-4.
        #[arg(long)]
        algorithm: Option<String>,
        /// Where to write the trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a replicated sweep.
    Replicate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Recompute rolling-norm diagnostics from trace CSVs.
    Diagnose {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 250)]
        window: usize,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
    /// Marginal MLE of a one-latent-per-cluster dataset by quadrature.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        /// Gauss–Hermite order.
        #[arg(long, default_value_t = QuadratureRule::DEFAULT_ORDER)]
        order: usize,
    },
}

enum Failure {
    Config(String),
    Fatal(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Failure::Config(m),
            other => Failure::Fatal(other.to_string()),
        }
    }
}

fn fatal(e: impl std::fmt::Display) -> Failure {
    Failure::Fatal(e.to_string())
}

impl ConfigArgs {
    fn load(&self, extra: &[(String, String)]) -> Result<(String, Vec<(String, String)>), Failure> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
            None => String::new(),
        };
        let mut overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        overrides.extend_from_slice(extra);
        Ok((text, overrides))
    }
}

fn main() -> ExitCode {
    // Usage errors are configuration errors; clap's own exit code 2 would
    // read as "sweep finished with failed runs".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Fit {
            config,
            data,
            seed,
            algorithm,
            trace,
        } => fit(&config, &data, seed, algorithm, trace.as_deref()),
        Command::Replicate {
            config,
            seed,
            workers,
            output_dir,
        } => replicate(&config, seed, workers, output_dir),
        Command::Diagnose {
            traces,
            window,
            threshold,
        } => diagnose(&traces, window, threshold),
        Command::Oracle { data, order } => oracle(&data, order),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Fatal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn simulate(args: &ConfigArgs, seed: u64, out: &Path) -> Result<u8, Failure> {
    let (text, overrides) = args.load(&[("seed".into(), seed.to_string())])?;
    let config = ExperimentConfig::parse(&text, &overrides)?;
    fs::create_dir_all(out).map_err(fatal)?;
    let design = experiment_design(&config)?;
    if let Some(d) = &design {
        io::save_design_file(&out.join("design.csv"), d).map_err(fatal)?;
    }
    for r in 0..config.replicates {
        let sim = sweep::replicate_dataset(&config, design.as_ref(), r)?;
        let path = out.join(format!("data_{r:04}.txt"));
        io::save_dataset(&path, &sim.data).map_err(fatal)?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn print_trace_outcome(trace: &RunTrace) -> u8 {
    match &trace.failure {
        Some(f) => {
            eprintln!(
                "run failed at iteration {} ({}): {}",
                f.iteration,
                f.kind.tag(),
                f.message
            );
            EXIT_FAILED_RUNS
        }
        None => 0,
    }
}

fn fit(
    args: &ConfigArgs,
    data_path: &Path,
    seed: Option<u64>,
    algorithm: Option<String>,
    trace_path: Option<&Path>,
) -> Result<u8, Failure> {
    let mut extra = Vec::new();
    if let Some(s) = seed {
        extra.push(("seed".to_string(), s.to_string()));
    }
    if let Some(a) = algorithm {
        extra.push(("algorithm".to_string(), a));
    }
    let (text, overrides) = args.load(&extra)?;
    let config = FitConfig::parse(&text, &overrides)?;
    let data = io::load_dataset(data_path).map_err(fatal)?;
    let init = config.theta_init(data.p(), data.k())?;
    let run_config = config.run.run_config(&config.algorithm, init, config.seed);

    let trace = if config.variance {
        let run = run_imsa_variance(&run_config, &data, config.variance_schedules)
            .map_err(|e| Failure::Config(e.to_string()))?;
        println!("estimate: {}", describe_theta(&run.trace.final_theta));
        match &run.variance {
            Ok(v) => println!("variance estimate:\n{v}"),
            Err(e) => eprintln!("{e}"),
        }
        run.trace
    } else {
        let output = default_runner(&run_config, &data).map_err(|e| Failure::Config(e.to_string()))?;
        println!(
            "estimate: {}",
            describe_theta(&output.estimate.to_scale(Scale::OriginalSigma2))
        );
        println!(
            "estimate (log sigma): {}",
            describe_theta(&output.estimate.to_scale(Scale::LogSigma))
        );
        output.trace
    };
    if let Some(path) = trace_path {
        fs::write(path, io::trace_csv_bytes(&trace)).map_err(fatal)?;
    }
    Ok(print_trace_outcome(&trace))
}

fn replicate(
    args: &ConfigArgs,
    seed: u64,
    workers: Option<usize>,
    output_dir: Option<PathBuf>,
) -> Result<u8, Failure> {
    let mut extra = vec![("seed".to_string(), seed.to_string())];
    if let Some(w) = workers {
        extra.push(("workers".into(), w.to_string()));
    }
    if let Some(d) = output_dir {
        extra.push(("output_dir".into(), d.display().to_string()));
    }
    let (text, overrides) = args.load(&extra)?;
    let config = ExperimentConfig::parse(&text, &overrides)?;
    eprintln!(
        "{} sweep: {} replicates x {} algorithms, T = {}, output in {}",
        config.model.name(),
        config.replicates,
        config.algorithms.len(),
        config.run.iterations,
        config.output_dir.display()
    );
    let outcome = sweep::run_replicates(&config)?;
    if outcome.resumed_replicates > 0 {
        eprintln!("resumed {} finished replicates", outcome.resumed_replicates);
    }
    println!("algorithm,parameter,n,min,q25,median,q75,max");
    for a in &outcome.aggregate {
        println!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            a.algorithm, a.parameter, a.n, a.min, a.q25, a.median, a.q75, a.max
        );
    }
    eprintln!("{} of {} runs failed", outcome.failed_runs, outcome.rows.len());
    Ok(if outcome.failed_runs > 0 { EXIT_FAILED_RUNS } else { 0 })
}

fn diagnose(traces: &[PathBuf], window: usize, threshold: f64) -> Result<u8, Failure> {
    if window == 0 {
        return Err(Failure::Config("window must be at least 1".into()));
    }
    println!("trace,iterations,min_rolling_norm,converged");
    for path in traces {
        let file = fs::File::open(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
        let table = io::read_trace(file).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
        let diag = rolling_norm_diagnostic(&table.update_norms, window, threshold)
            .map_err(|e| fatal(format!("{}: {e}", path.display())))?;
        println!(
            "{},{},{},{}",
            path.display(),
            table.update_norms.len(),
            diag.min_rolling,
            diag.converged
        );
    }
    Ok(0)
}

fn oracle(data_path: &Path, order: usize) -> Result<u8, Failure> {
    if order == 0 {
        return Err(Failure::Config("order must be at least 1".into()));
    }
    let data = io::load_dataset(data_path).map_err(fatal)?;
    let rule = QuadratureRule::gauss_hermite(order);
    let mle = quadrature_mle(&data, &rule, None).map_err(fatal)?;
    println!("mle: {}", describe_theta(&mle.theta.to_scale(Scale::OriginalSigma2)));
    println!("mle (log sigma): {}", describe_theta(&mle.theta));
    println!("loglik: {}", mle.loglik);
    println!("gradient sup-norm: {:.3e}", mle.gradient_norm);
    Ok(0)
}
