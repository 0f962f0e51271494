use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gridcast::config::ExperimentConfig;
use gridcast::pipeline::{self, write_manifest};
use gridcast::{report, synth_generate, Error, SynthSpec};

#[derive(Parser)]
#[command(name = "gridcast", version, about = "Renewable generation forecasting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `out_dir`. For `synth`, the dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; GRIDCAST_JOBS takes precedence.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into `data_dir`.
    Synth(Common),
    /// Daily aggregation, capacity weighting and variable selection.
    Ingest(Common),
    /// Build and store every dataset view.
    Features(Common),
    /// Compare estimated and actual error across CV schemes.
    CvBench(Common),
    /// Tune every model on every view.
    Hpo(Common),
    /// Fit on train+validation with the tuned hyperparameters.
    Train(Common),
    /// Predict with the saved models.
    Predict(Common),
    /// Render tables and charts for a run directory.
    Report(Common),
    /// All stages end to end.
    Benchmark(Common),
}

fn jobs(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    match std::env::var("GRIDCAST_JOBS") {
        Ok(v) if !v.trim().is_empty() => {
            let n = v.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("GRIDCAST_JOBS={v} is not a count")))?;
            Ok(Some(n))
        }
        _ => Ok(flag),
    }
}

fn setup_threads(n: Option<usize>) -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn load(c: &Common, is_synth: bool) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
        if let Some(sy) = cfg.synth.as_mut() {
            sy.seed = s;
        }
    }
    if let Some(o) = &c.out {
        if is_synth {
            cfg.data_dir = o.clone();
        } else {
            cfg.out_dir = o.clone();
        }
    }
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, command: &str, failures: Vec<(String, String)>) -> anyhow::Result<bool> {
    let run_dir = cfg.run_dir();
    write_manifest(cfg, &run_dir, command, &failures)?;
    for (run, err) in &failures {
        eprintln!("failed: {run}: {err}");
    }
    println!("{}", run_dir.display());
    Ok(failures.is_empty())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (name, common) = match &cli.command {
        Command::Synth(c) => ("synth", c),
        Command::Ingest(c) => ("ingest", c),
        Command::Features(c) => ("features", c),
        Command::CvBench(c) => ("cv-bench", c),
        Command::Hpo(c) => ("hpo", c),
        Command::Train(c) => ("train", c),
        Command::Predict(c) => ("predict", c),
        Command::Report(c) => ("report", c),
        Command::Benchmark(c) => ("benchmark", c),
    };
    let cfg = load(common, name == "synth")?;
    setup_threads(jobs(common.jobs)?)?;
    let run_dir = cfg.run_dir();
    match cli.command {
        Command::Synth(_) => {
            let spec = cfg.synth.clone().unwrap_or_else(|| SynthSpec { sector: cfg.sector, seed: cfg.seed, ..SynthSpec::default() });
            synth_generate(&spec, &cfg.data_dir).with_context(|| format!("writing {}", cfg.data_dir.display()))?;
            println!("{}", cfg.data_dir.display());
            Ok(true)
        }
        Command::Ingest(_) => {
            let ds = pipeline::load_dataset(&cfg)?;
            pipeline::write_ingest_artifacts(&ds, &run_dir.join("ingest"))?;
            finish(&cfg, name, vec![])
        }
        Command::Features(_) => {
            let ds = pipeline::load_dataset(&cfg)?;
            let views = pipeline::build_views(&cfg, &ds)?;
            pipeline::write_views(&cfg, &ds.grid, &views, &run_dir.join("views"))?;
            finish(&cfg, name, vec![])
        }
        Command::CvBench(_) => {
            if cfg.cv_bench.is_none() {
                return Err(Error::InvalidConfig("cv-bench needs a `cv_bench` section".into()).into());
            }
            let views = pipeline::load_or_build_views(&cfg, &run_dir)?;
            let out = pipeline::run_cv_bench(&cfg, &views, &run_dir)?;
            report::render(&run_dir)?;
            finish(&cfg, name, out.failures)
        }
        Command::Hpo(_) => {
            let f = pipeline::run_hpo_stage(&cfg)?;
            finish(&cfg, name, f)
        }
        Command::Train(_) => {
            let f = pipeline::run_train_stage(&cfg)?;
            finish(&cfg, name, f)
        }
        Command::Predict(_) => {
            let f = pipeline::run_predict_stage(&cfg)?;
            finish(&cfg, name, f)
        }
        Command::Report(_) => {
            for p in report::render(&run_dir)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Benchmark(_) => {
            let out = gridcast::run_benchmark(&cfg)?;
            for (run, err) in &out.failures {
                eprintln!("failed: {run}: {err}");
            }
            println!("{}", out.run_dir.display());
            Ok(out.failures.is_empty())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
