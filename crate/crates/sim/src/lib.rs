//! Experiment harness for the `dprl-core` agents: configuration, seeded
//! replications, CSV and SVG output, and property audits.

pub mod audit;
pub mod config;
pub mod io;
pub mod records;
pub mod runner;
pub mod svg;

use std::path::PathBuf;

use config::{Experiment, ExperimentConfig};
use records::RunRecord;
use runner::{BanditWorld, RunError, build_rl_environment, run_bandit, run_rl};

/// Runs an `rl` or `bandit` experiment. `None` for audits.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Option<Vec<RunRecord>>, RunError> {
    match &config.experiment {
        Experiment::Rl { agent, environment } => {
            let mdp = build_rl_environment(environment, agent)?;
            run_rl(&mdp, agent, config.seed, config.replications).map(Some)
        }
        Experiment::Bandit { agent, environment } => {
            let world = BanditWorld::build(environment, agent)?;
            run_bandit(&world, agent, config.seed, config.replications).map(Some)
        }
        Experiment::Audit(_) => Ok(None),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Writes `records.csv` (and `regret.svg` when `plot` is set) into `dir`.
pub fn write_outputs(records: &[RunRecord], dir: &std::path::Path, plot: bool, title: &str) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("records.csv");
    records::write_csv_file(records, &csv_path)?;
    let mut written = vec![csv_path];
    if plot {
        let svg_path = dir.join("regret.svg");
        svg::write_svg(records, title, &svg_path)?;
        written.push(svg_path);
    }
    Ok(written)
}

/// One line per replication: final cumulative regret, switches and budget.
pub fn summarize(records: &[RunRecord]) -> String {
    let mut last: std::collections::BTreeMap<usize, &RunRecord> = Default::default();
    for r in records {
        last.insert(r.replication, r);
    }
    last.values()
        .map(|r| {
            format!(
                "replication {}: steps {} cum_regret {:.4} switches {} rho_spent {:.6} good_event {}\n",
                r.replication, r.step, r.cum_regret, r.switch_count, r.rho_spent, r.good_event
            )
        })
        .collect()
}
