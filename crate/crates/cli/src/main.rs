//! `nlsi`: fit, simulate and tabulate system-identification baselines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nlsi_core::data::{load_csv, write_csv, BenchmarkId, CsvSchema, DatasetManifest, TimeSeries};
use nlsi_core::harness::fetch::{ingest, FetchOptions};
use nlsi_core::harness::metrics::compute_rmse;
use nlsi_core::harness::models::{cell_seed, MODEL_FORMAT_VERSION};
use nlsi_core::harness::{
    fit_model, load_reports, run_benchmark, run_selftest, write_surrogates, write_table, CellStatus, Hyper, ModelId,
    ModelRecord, RunConfig, SurrogateScale, TableFormat,
};

#[derive(Parser)]
#[command(name = "nlsi", version, about = "Baseline models for nonlinear system identification benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch and verify every dataset file named by a manifest.
    Ingest(IngestArgs),
    /// Fit one model on one benchmark's training record.
    Fit(FitArgs),
    /// Free-run a saved model on a CSV record.
    Simulate(SimulateArgs),
    /// Run the full (benchmark, model) grid from a config file.
    Benchmark(BenchmarkArgs),
    /// Render stored reports as a table.
    Report(ReportArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Never touch the network; only verify what is cached.
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = 3)]
    attempts: usize,
    /// Instead of fetching, write synthetic stand-in datasets and a
    /// manifest to this directory's `manifest` path.
    #[arg(long)]
    surrogate: bool,
    #[arg(long, default_value_t = 0)]
    surrogate_seed: u64,
    #[arg(long, default_value_t = 1200)]
    train_len: usize,
    #[arg(long, default_value_t = 600)]
    test_len: usize,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    benchmark: BenchmarkId,
    #[arg(long)]
    model: ModelId,
    #[arg(long)]
    seed: u64,
    /// Run config supplying hyperparameter overrides and `val_fraction`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Saved model record.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "u")]
    input_column: String,
    #[arg(long, default_value = "y")]
    output_column: String,
    #[arg(long, default_value_t = 1.0)]
    sample_time: f64,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    resume: bool,
    /// Also write the result table here (format from the extension).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Benchmark output directory (containing `reports/`) or a report directory.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    if a.surrogate {
        let dir = a.manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let scale = SurrogateScale { train_len: a.train_len, test_len: a.test_len };
        let path = write_surrogates(dir, &BenchmarkId::ALL, scale, a.surrogate_seed)?;
        if path != a.manifest {
            std::fs::rename(&path, &a.manifest).with_context(|| format!("moving manifest to {}", a.manifest.display()))?;
        }
        println!("wrote surrogate datasets and {}", a.manifest.display());
        return Ok(());
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let opts = FetchOptions { offline: a.offline, attempts: a.attempts, ..FetchOptions::default() };
    for p in ingest(&manifest, &opts)? {
        println!("ok {}", p.display());
    }
    Ok(())
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let hyper = cfg.as_ref().map(|c| c.hyper_for(a.model)).unwrap_or_else(Hyper::default);
    let val_fraction = a.val_fraction.or(cfg.as_ref().map(|c| c.val_fraction)).unwrap_or(0.2);
    let manifest = DatasetManifest::load(&a.manifest)?;
    let fit = manifest.entry(a.benchmark)?.load_fit_data(&manifest, val_fraction)?;
    let seed = cell_seed(a.seed, a.benchmark, a.model);
    let (model, selected) = fit_model(a.model, a.benchmark, &fit, &hyper, seed)?;
    let record = ModelRecord {
        format_version: MODEL_FORMAT_VERSION,
        benchmark_id: a.benchmark,
        model_id: a.model,
        seed,
        model,
    };
    record.save(&a.out)?;
    println!("{}", format_selection(&selected));
    Ok(())
}

fn format_selection(sel: &nlsi_core::harness::models::Selection) -> String {
    sel.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let record = ModelRecord::load(&a.model)?;
    let schema = CsvSchema { input: a.input_column, output: a.output_column };
    let ts = load_csv(&a.input, &schema, a.sample_time)?;
    let yhat = record.model.simulate(&ts)?;
    let rmse = compute_rmse(&ts.y, &yhat, a.burn_in)?;
    println!("rmse {rmse}");
    if let Some(out) = a.output {
        let sim = TimeSeries::new("simulated", ts.u.clone(), yhat, ts.sample_time)?;
        write_csv(&out, &CsvSchema { input: schema.input, output: "y_sim".into() }, &sim)?;
    }
    Ok(())
}

fn benchmark_cmd(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.seed = a.seed;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(m) = a.manifest {
        cfg.manifest = m;
    }
    if let Some(b) = a.burn_in {
        cfg.burn_in = b;
    }
    if let Some(v) = a.val_fraction {
        cfg.val_fraction = v;
    }
    cfg.resume |= a.resume;
    let reports = run_benchmark(&cfg)?;
    let failed = reports.iter().filter(|r| matches!(r.status, CellStatus::Failed { .. })).count();
    info!("{} cells, {failed} failed", reports.len());
    if let Some(path) = a.table {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => TableFormat::Csv,
            _ => TableFormat::Markdown,
        };
        write_table(&reports, format, &path)?;
    }
    println!("{} reports in {}", reports.len(), cfg.output_dir.join("reports").display());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let nested = a.dir.join("reports");
    let dir = if nested.is_dir() { nested } else { a.dir };
    let reports = load_reports(&dir)?;
    if reports.is_empty() {
        bail!("no reports in {}", dir.display());
    }
    match a.out {
        Some(p) => write_table(&reports, a.format, &p)?,
        None => print!("{}", nlsi_core::harness::emit_table(&reports, a.format)?),
    }
    Ok(())
}

fn selftest_cmd() -> Result<()> {
    let checks = run_selftest();
    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {}", c.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e}", c.name);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Selftest => selftest_cmd(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
