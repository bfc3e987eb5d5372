use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mletpf_cli::experiments::{self, cost_table};
use mletpf_cli::output::{write_json, write_text};
use mletpf_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mletpf", version, about = "Multilevel ensemble transform particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Filter seed; defaults to the `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Apply the config's `[desk]` overrides.
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Per-level mean variance and mean difference over all assimilation steps.
    VarianceDecay,
    /// Cost against RMSE of both filters over the config's epsilon list.
    CostVsAccuracy,
    /// Cumulative errors of observations and estimator against the reference path.
    Stability,
    /// Single-level filter on the finest level.
    RunEtpf,
    /// Multilevel filter.
    RunMletpf,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Parse("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if cli.desk_scale {
        cfg = cfg.desk_scale()?;
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let hash = cfg.hash();
    let out: &Path = &cli.out;
    let mut written = Vec::new();
    match cli.command {
        Command::VarianceDecay => {
            let r = experiments::variance_decay(&cfg, seed)?;
            written.push(write_text(out, "variance_decay.csv", &r.table.to_csv(&hash, seed))?);
            written.push(write_json(out, "variance_decay_summary.json", &r.summary)?);
        }
        Command::CostVsAccuracy => {
            let points = experiments::cost_vs_accuracy(&cfg, seed, Some(&out.join("cache")))?;
            written.push(write_text(out, "cost_vs_accuracy.csv", &cost_table(&points).to_csv(&hash, seed))?);
        }
        Command::Stability => {
            let r = experiments::stability(&cfg, seed)?;
            written.push(write_text(out, "stability.csv", &r.table.to_csv(&hash, seed))?);
            written.push(write_json(out, "stability_summary.json", &r.summary)?);
        }
        Command::RunEtpf | Command::RunMletpf => {
            let (r, name) = match cli.command {
                Command::RunEtpf => (experiments::run_single_level(&cfg, seed)?, "etpf"),
                _ => (experiments::run_multilevel(&cfg, seed)?, "mletpf"),
            };
            written.push(write_text(out, &format!("{name}_estimates.csv"), &r.estimates.to_csv(&hash, seed))?);
            let reference = format!("# config_hash={hash} seed={seed}\n{}", r.reference);
            written.push(write_text(out, "reference.csv", &reference)?);
            written.push(write_json(out, &format!("{name}_summary.json"), &r.summary)?);
        }
    }
    Ok(written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
