use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use put_cli::config::{config_hash, Config, ConfigError};
use put_cli::{is_config_error, Run};
use put_core::geolife::SyntheticUser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "put", version, about = "Privacy-utility trade-offs for time-series release")]
struct Cli {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and rollouts.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the exact-enumeration identity checks.
    Verify,
    /// Train and evaluate one policy per chain and sweep value.
    SynthSweep,
    /// Cluster PLT files into a discrete user model.
    Geolife {
        /// Overrides `[geolife] input`.
        input: Option<PathBuf>,
    },
    /// Score released traces with the m-gram adversary.
    Adversary,
    /// Train one policy per scenario and save checkpoints.
    Train,
    /// Evaluate a saved actor checkpoint.
    Eval,
    /// Write the synthetic GeoLife-format sample user.
    MakeSample {
        #[arg(long, default_value_t = SyntheticUser::default().seed)]
        sample_seed: u64,
        #[arg(long, default_value_t = SyntheticUser::default().days)]
        days: usize,
    },
}

fn load(cli: &Cli) -> Result<Run> {
    let (config, hash) = match &cli.config {
        Some(p) => Config::load(p)?,
        None => (Config::default(), config_hash(b"")),
    };
    Ok(Run::new(config, hash, cli.seed, cli.out.clone()))
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(ConfigError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut run = load(&cli)?;
    match cli.command {
        Command::Verify => {
            let report = put_cli::cmd_verify(run.seed, None)?;
            print!("{}", report.to_text());
            if !report.all_passed() {
                let names: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
                eprintln!("failed checks: {}", names.join(", "));
                return Ok(false);
            }
        }
        Command::SynthSweep => {
            let s = put_cli::cmd_synth_sweep(&run)?;
            println!("{} rows written to {}", s.records.len(), run.out.join("put.csv").display());
            for f in &s.failures {
                eprintln!("point failed: {f}");
            }
            return Ok(s.failures.is_empty());
        }
        Command::Geolife { input } => {
            if let Some(i) = input {
                run.config.geolife.input = i;
            }
            let s = put_cli::cmd_geolife(&run)?;
            print!("{}", s.to_text());
        }
        Command::Adversary => {
            let rows = put_cli::cmd_adversary(&run)?;
            print!("{}", put_core::adversary::report_csv(&rows));
        }
        Command::Train => {
            for r in put_cli::cmd_train(&run)? {
                println!("{}", r.csv_row());
            }
        }
        Command::Eval => {
            for r in put_cli::cmd_eval(&run)? {
                println!("{}", r.csv_row());
            }
        }
        Command::MakeSample { sample_seed, days } => {
            let cfg = SyntheticUser {
                seed: sample_seed,
                days,
                ..SyntheticUser::default()
            };
            let files = put_cli::cmd_make_sample(&run.out, &cfg)?;
            println!("{} files written under {}", files.len(), run.out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
