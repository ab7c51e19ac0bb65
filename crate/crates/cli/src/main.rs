use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use onebit_core::analytics::{analytic_curves, snr_points};
use onebit_core::checks::{run_check, CHECK_IDS};
use onebit_core::harness::{
    figure_preset, format_float, run_experiment, ExperimentConfig, MonteCarloResult, PriorSpec,
};

#[derive(Parser)]
#[command(name = "onebit", version, about = "One-bit quantized estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output`; without either, CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a figure preset (1-6).
    Figure {
        #[arg(value_parser = clap::value_parser!(u32).range(1..=6))]
        id: u32,
        /// Desk-scale variant (figure 1: N = 16, 2,000 samples).
        #[arg(long)]
        small: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the preset config as JSON instead of running it.
        #[arg(long)]
        print_config: bool,
    },
    /// Run the property checks and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated subset of check ids, e.g. `A2,A3`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print closed-form MSE curves as CSV.
    MseAnalytic {
        /// `default`, comma-separated `weight:variance` pairs, or a JSON prior.
        #[arg(long, default_value = "default")]
        prior: String,
        /// SNR range `start:stop:step` in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: String,
        /// Also print the noiseless pilot curves for 1..=M pilots.
        #[arg(long)]
        pilots: Option<usize>,
    },
}

fn emit(result: &MonteCarloResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            onebit_core::harness::write_results(result, path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
        }
        None => std::io::stdout().write_all(result.to_csv().as_bytes())?,
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
    match (parts.len(), nums) {
        (3, Ok(v)) => Ok(snr_points(v[0], v[1], v[2])?),
        _ => bail!("expected `start:stop:step`, got `{text}`"),
    }
}

fn verify(seed: u64, only: &[String], json: bool) -> Result<bool> {
    let ids: Vec<&str> = if only.is_empty() { CHECK_IDS.to_vec() } else { only.iter().map(|s| s.trim()).collect() };
    let mut outcomes = Vec::with_capacity(ids.len());
    for id in ids {
        let outcome = run_check(id, seed)?;
        if !json {
            println!(
                "{:<4} {:<4} {:>7.1}s  {}: {}",
                outcome.id,
                if outcome.passed { "PASS" } else { "FAIL" },
                outcome.seconds,
                outcome.title,
                outcome.detail
            );
        }
        outcomes.push(outcome);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    if json {
        println!("{}", serde_json::to_string_pretty(&outcomes)?);
    } else {
        println!("{passed}/{} checks passed", outcomes.len());
    }
    Ok(passed == outcomes.len())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let config =
                ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            let result = run_experiment(&config)?;
            emit(&result, out.as_deref().or(config.output.as_deref()))?;
        }
        Command::Figure { id, small, out, print_config } => {
            let config = figure_preset(id, small)?;
            if print_config {
                println!("{}", config.to_json()?);
            } else {
                emit(&run_experiment(&config)?, out.as_deref())?;
            }
        }
        Command::Verify { seed, only, json } => return verify(seed, &only, json),
        Command::MseAnalytic { prior, snr, pilots } => {
            let prior = PriorSpec::parse_cli(&prior)?;
            if prior.dim() != 1 {
                bail!("closed-form curves need a scalar prior");
            }
            let curves = analytic_curves(&prior.build()?, &parse_range(&snr)?, pilots)?;
            let mut out = String::from("curve,x,value\n");
            for curve in curves {
                for (x, v) in curve.grid {
                    out.push_str(&format!("{},{},{}\n", curve.label, format_float(x), format_float(v)));
                }
            }
            std::io::stdout().write_all(out.as_bytes())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
