use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gossipmf::emit::{emit_cv, emit_metrics};
use gossipmf::gossipmf_core::synthetic::gen_synthetic;
use gossipmf::movielens::{write_official_folds, write_udata};
use gossipmf::{cross_validate, run_experiment, Engine, Error, ExperimentReport, RawConfig, Result, RunConfig};

/// Decentralized matrix factorization over a simulated gossip network.
#[derive(Parser)]
#[command(name = "gossipmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Five-fold cross-validation on the official MovieLens folds.
    Cv {
        /// Directory holding u1.base/u1.test .. u5.base/u5.test.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Folds trained at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the centralized paired-update SGD baseline on the configured data.
    Baseline(RunArgs),
    /// Recreate the official u1..u5 base/test files from a u.data file.
    Folds {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset in u.data format.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        rank: usize,
        #[arg(long, default_value_t = 0.2)]
        missing: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; required unless the config sets one.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV; a JSON summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set eta=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn raw(&self) -> Result<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        for pair in &self.overrides {
            raw.set_pair(pair)?;
        }
        if let Some(seed) = self.seed {
            raw.set("seed", seed.to_string());
        }
        if let Some(out) = &self.out {
            raw.set("metrics_out", out.display().to_string());
        }
        Ok(raw)
    }
}

fn print_report(label: &str, r: &ExperimentReport) {
    println!(
        "{label}engine={} dataset={} {}={:.6} objective={:.6} updates={} delivered={} seconds={:.2}",
        r.config.engine.name(),
        r.config.dataset,
        r.metric.name(),
        r.final_rms,
        r.final_objective,
        r.stats.updates_applied,
        r.stats.delivered,
        r.wall_clock.as_secs_f64()
    );
}

fn run_one(config: RunConfig) -> Result<()> {
    let report = run_experiment(&config)?;
    print_report("", &report);
    if let Some(out) = &config.metrics_out {
        let json = emit_metrics(&report, out)?;
        println!("wrote {} and {}", out.display(), json.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run_one(RunConfig::from_raw(&args.raw()?)?),
        Command::Baseline(args) => {
            let mut config = RunConfig::from_raw(&args.raw()?)?;
            config.engine = Engine::Centralized;
            run_one(config)
        }
        Command::Cv { data, run, jobs } => {
            let mut raw = run.raw()?;
            raw.set("dataset", "movielens_cv");
            raw.set("data", data.display().to_string());
            let config = RunConfig::from_raw(&raw)?;
            let report = cross_validate(&config, jobs)?;
            for (id, r) in &report.folds {
                print_report(&format!("fold={id} "), r);
            }
            println!("mean_rmse={:.6}", report.mean_rmse);
            if let Some(out) = &config.metrics_out {
                let json = emit_cv(&report, out)?;
                println!("wrote {} and {}", out.display(), json.display());
            }
            Ok(())
        }
        Command::Folds { data, out } => {
            write_official_folds(&data, &out)?;
            println!("wrote u1..u5 base/test to {}", out.display());
            Ok(())
        }
        Command::Gen { m, n, rank, missing, seed, out } => {
            let (_, x) = gen_synthetic(m, n, rank, missing, seed)?;
            let file = File::create(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_udata(&x, BufWriter::new(file)).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            println!("wrote {} ratings ({m}x{n}) to {}", x.len(), out.display());
            Ok(())
        }
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
