use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use imsa::harness::config::ExperimentConfig;
use imsa::harness::sweep::{
    aggregate, default_runner, read_aggregate, read_summary, run_replicates, run_replicates_with,
    trace_path, HarnessError,
};
use imsa::io::read_trace;
use tempfile::TempDir;

fn tiny_config(dir: &Path, replicates: usize, workers: usize, algorithms: &str) -> ExperimentConfig {
    let pairs: Vec<(String, String)> = [
        ("model", "booth-hobert".to_string()),
        ("replicates", replicates.to_string()),
        ("algorithms", algorithms.to_string()),
        ("iterations", "10".into()),
        ("chains", "2".into()),
        ("mcmc_steps", "5".into()),
        ("precondition_after", "5".into()),
        ("window", "5".into()),
        ("seed", "2024".into()),
        ("workers", workers.to_string()),
        ("output_dir", dir.display().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    ExperimentConfig::parse("", &pairs).unwrap()
}

#[test]
fn summary_rows_hold_the_final_iterates() {
    let tmp = TempDir::new().unwrap();
    let config = tiny_config(tmp.path(), 1, 1, "imsa, imsa-log, scoresa-2");
    let outcome = run_replicates(&config).unwrap();
    assert_eq!(outcome.rows.len(), 3);
    for row in &outcome.rows {
        let trace = read_trace(fs::File::open(trace_path(tmp.path(), 0, &row.algorithm)).unwrap()).unwrap();
        assert_eq!(trace.iterations.len(), 10);
        let last = trace.thetas.last().unwrap();
        assert_eq!(row.beta[0], last[0]);
        // traces are on the update scale
        let v = if row.algorithm == "imsa" { row.sigma2[0] } else { row.log_sigma[0] };
        assert!((v - last[1]).abs() <= 1e-15 * v.abs().max(1.0));
    }
}

#[test]
fn im_summary_is_the_post_burn_in_average() {
    let tmp = TempDir::new().unwrap();
    let config = tiny_config(tmp.path(), 1, 1, "im");
    let outcome = run_replicates(&config).unwrap();
    let trace = read_trace(fs::File::open(trace_path(tmp.path(), 0, "im")).unwrap()).unwrap();
    let mean = trace.thetas[5..].iter().map(|t| t[0]).sum::<f64>() / 5.0;
    assert!((outcome.rows[0].beta[0] - mean).abs() < 1e-12);
}

#[test]
fn resumed_sweep_reproduces_the_summary() {
    let tmp = TempDir::new().unwrap();
    let config = tiny_config(tmp.path(), 3, 1, "imsa, scoresa-4");
    let first = run_replicates(&config).unwrap();
    assert_eq!(first.rows.len(), 6);
    assert_eq!(first.resumed_replicates, 0);
    let summary = fs::read(tmp.path().join("summary.csv")).unwrap();

    fs::remove_file(tmp.path().join("replicates/rep_0001.csv")).unwrap();
    let calls = AtomicUsize::new(0);
    let second = run_replicates_with(&config, |c, d| {
        calls.fetch_add(1, Ordering::SeqCst);
        default_runner(c, d)
    })
    .unwrap();
    assert_eq!(second.resumed_replicates, 2);
    assert_eq!(calls.load(Ordering::SeqCst), 2);
    assert_eq!(fs::read(tmp.path().join("summary.csv")).unwrap(), summary);
    assert_eq!(first.aggregate, second.aggregate);
}

#[test]
fn changed_configuration_refuses_to_resume() {
    let tmp = TempDir::new().unwrap();
    let config = tiny_config(tmp.path(), 1, 1, "imsa");
    run_replicates(&config).unwrap();
    let mut changed = config.clone();
    changed.run.iterations = 12;
    assert!(matches!(run_replicates(&changed), Err(HarnessError::Resume(_))));
    // output location and worker count are not part of the settings
    let mut more_workers = config.clone();
    more_workers.workers = 2;
    assert_eq!(run_replicates(&more_workers).unwrap().resumed_replicates, 1);
}

#[test]
fn aggregate_file_matches_replicate_checkpoints() {
    let tmp = TempDir::new().unwrap();
    let config = tiny_config(tmp.path(), 4, 2, "imsa, imsa-log");
    run_replicates(&config).unwrap();
    let mut rows = Vec::new();
    for r in 0..4 {
        let path = tmp.path().join(format!("replicates/rep_{r:04}.csv"));
        rows.extend(read_summary(fs::File::open(path).unwrap()).unwrap().0);
    }
    let labels = vec!["imsa".to_string(), "imsa-log".to_string()];
    let recomputed = aggregate(&rows, &labels, 1, 1);
    let written = read_aggregate(fs::File::open(tmp.path().join("aggregate.csv")).unwrap()).unwrap();
    assert_eq!(written, recomputed);
    assert!(written.iter().all(|a| a.n == 4));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_replicates(&tiny_config(a.path(), 4, 1, "imsa, scoresa-6")).unwrap();
    run_replicates(&tiny_config(b.path(), 4, 3, "imsa, scoresa-6")).unwrap();
    for file in ["summary.csv", "aggregate.csv", "config.txt", "traces/rep_0003_scoresa-6.csv"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn missing_seed_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let mut config = tiny_config(tmp.path(), 1, 1, "imsa");
    config.seed = None;
    assert!(matches!(run_replicates(&config), Err(HarnessError::Config(_))));
}
