//! Experiment runner for the rds-lab scenarios.

pub mod config;
pub mod error;
pub mod report;
pub mod scenarios;

use std::fs;

pub use config::ExperimentConfig;
pub use error::CliError;

/// Exit status for a completed run whose blow-up fraction exceeded the budget.
pub const EXIT_BLOW_UP: i32 = 3;

/// What a finished run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub rows: Vec<report::SummaryRow>,
    pub files: Vec<std::path::PathBuf>,
    pub blow_ups: usize,
    pub attempted: usize,
    pub over_budget: bool,
}

/// Run a resolved experiment and write its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let output = (cfg.scenario.run)(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let mut files = Vec::new();
    let echo = cfg.out.join("effective_config.toml");
    fs::write(&echo, cfg.to_toml())?;
    files.push(echo);
    let summary = cfg.out.join("summary.csv");
    report::write_summary(&summary, cfg.scenario.name, &output.rows)?;
    files.push(summary);
    for table in &output.tables {
        report::write_table(&cfg.out, table)?;
        files.push(cfg.out.join(&table.file));
    }
    let rate = if output.attempted == 0 { 0.0 } else { output.blow_ups as f64 / output.attempted as f64 };
    Ok(RunSummary {
        rows: output.rows,
        files,
        blow_ups: output.blow_ups,
        attempted: output.attempted,
        over_budget: rate > cfg.failure_budget,
    })
}
