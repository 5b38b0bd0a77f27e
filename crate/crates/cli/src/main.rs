use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use irs_link::exec::Execution;
use irs_link::harness::{emit_report, read_config, run_experiment_with, Scenario, SimConfig, Sweep};

#[derive(Parser)]
#[command(name = "sim", version, about = "Monte Carlo simulator for surface-assisted vehicular links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report files.
    Run {
        /// TOML or JSON configuration; missing keys take defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        /// `name=v1,v2,...`
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Run trials on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn apply_overrides(
    cfg: &mut SimConfig,
    scenario: Option<String>,
    sweep: Option<String>,
    trials: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    if let Some(s) = scenario {
        cfg.scenario = s.parse::<Scenario>()?;
    }
    if let Some(s) = sweep {
        cfg.sweep = Some(s.parse::<Sweep>()?);
    }
    if let Some(n) = trials {
        cfg.n_trials = n;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            scenario,
            sweep,
            trials,
            seed,
            out,
            sequential,
        } => {
            let mut cfg = read_config(&config)?;
            apply_overrides(&mut cfg, scenario, sweep, trials, seed)?;
            cfg.validate().context("invalid configuration")?;
            let exec = if sequential { Execution::Sequential } else { Execution::default() };
            let report = run_experiment_with(&cfg, exec)?;
            for p in &report.points {
                let label = p.sweep_value.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
                let nmse = p.nmse.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
                println!(
                    "{label}\trate {:.4} +/- {:.4}\tnmse {nmse}\tsnr_p10 {:.2} dB",
                    p.mean_rate, p.stderr, p.snr_p10_db
                );
            }
            let files = emit_report(&report, &out)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Validate { config } => {
            let cfg = read_config(&config)?;
            cfg.validate()?;
            println!("ok: {} (hash {})", config.display(), cfg.config_hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
