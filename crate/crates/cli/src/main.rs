use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rds_lab::config::{apply_set, load_config, merge, resolve, RawConfig};
use rds_lab::scenarios::{defaults_help, SCENARIOS};
use rds_lab::{run_experiment, CliError, EXIT_BLOW_UP};

#[derive(Parser)]
#[command(name = "rds-lab", version, about = "Synchronization-by-noise experiments for random dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSVs to the output directory.
    #[command(after_long_help = defaults_help())]
    Run {
        /// Scenario name (see `rds-lab list`); may instead come from run.scenario.
        scenario: Option<String>,
        /// TOML file with [run] and [params] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replica count; sets the scenario's `reps` param.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        workers: Option<usize>,
        /// Override a param: key=value, params.key=value or run.key=value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// List scenarios and where they come from.
    List,
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[allow(clippy::too_many_arguments)]
fn gather(
    scenario: Option<String>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    reps: Option<usize>,
    workers: Option<usize>,
    sets: Vec<String>,
) -> Result<RawConfig, CliError> {
    let mut raw = match &config {
        Some(path) => load_config(path)?,
        None => RawConfig::default(),
    };
    if let Some(name) = scenario {
        if let Some(from_file) = &raw.scenario {
            if *from_file != name {
                return Err(CliError::Invalid(format!("scenario `{name}` conflicts with run.scenario = `{from_file}` in the config")));
            }
        }
        raw.scenario = Some(name);
    }
    for s in &sets {
        apply_set(&mut raw, s)?;
    }
    let mut flags = RawConfig { seed, workers, out, ..Default::default() };
    if let Some(r) = reps {
        flags.params.insert("reps".into(), rds_lab::config::Value::Num(r as f64));
    }
    merge(&mut raw, flags);
    Ok(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for s in SCENARIOS {
                println!("{:<26} {}", s.name, s.anchor);
            }
            Ok(0)
        }
        Command::Validate { config } => load_config(&config).and_then(resolve).map(|cfg| {
            print!("{}", cfg.to_toml());
            0
        }),
        Command::Run { scenario, config, out, seed, reps, workers, sets } => {
            gather(scenario, config, out, seed, reps, workers, sets).and_then(resolve).and_then(|cfg| {
                let summary = run_experiment(&cfg)?;
                for r in &summary.rows {
                    println!(
                        "{:<28} {:<22} {:>14.6} ± {:<10.3e} [{:.6}, {:.6}] n={:<5} {}",
                        r.param, r.value, r.estimate, r.stderr, r.ci_low, r.ci_high, r.n, r.verdict
                    );
                }
                for f in &summary.files {
                    println!("wrote {}", f.display());
                }
                if summary.blow_ups > 0 {
                    println!("{} of {} replicas blew up", summary.blow_ups, summary.attempted);
                }
                if summary.over_budget {
                    eprintln!("error: blow-up fraction exceeds the failure budget of {}", cfg.failure_budget);
                    return Ok(EXIT_BLOW_UP);
                }
                Ok(0)
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
