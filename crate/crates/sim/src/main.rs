use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dprl_sim::config::{ConfigError, Experiment, ExperimentConfig, Kind, Suite, parse_config_with};
use dprl_sim::runner::RunError;
use dprl_sim::{audit, run_experiment, summarize, write_outputs};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(name = "dprl", version, about = "Private LSVI-UCB and slowly updating private LinUCB experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run private LSVI-UCB replications.
    RunRl(RunArgs),
    /// Run slowly updating private LinUCB replications.
    RunBandit(RunArgs),
    /// Run a property audit suite.
    Audit {
        #[arg(long)]
        suite: Option<Suite>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rerun an experiment once per value of one configuration key.
    Sweep {
        /// Dotted key such as `agent.rho`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: bool,
    },
}

enum Failure {
    Validation(String),
    Audit,
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Environment(_) | RunError::File(_) => Failure::Validation(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<dprl_sim::OutputError> for Failure {
    fn from(e: dprl_sim::OutputError) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(path: &PathBuf, overrides: &[(String, String)], expected: Kind) -> Result<ExperimentConfig, Failure> {
    let config = parse_config_with(path, overrides)?;
    if config.kind() != expected {
        return Err(Failure::Validation(format!(
            "{} is a {:?} configuration, expected {expected:?}",
            path.display(),
            config.kind()
        )));
    }
    Ok(config)
}

fn run(args: RunArgs, kind: Kind) -> Result<(), Failure> {
    let mut overrides = Vec::new();
    if let Some(seed) = args.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    let mut config = load(&args.config, &overrides, kind)?;
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.plot |= args.plot;
    execute(&config, &format!("{kind:?} cumulative regret"))
}

fn execute(config: &ExperimentConfig, title: &str) -> Result<(), Failure> {
    let records = run_experiment(config)?.unwrap_or_default();
    for path in write_outputs(&records, &config.out_dir, config.plot, title)? {
        println!("wrote {}", path.display());
    }
    print!("{}", summarize(&records));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunRl(args) => run(args, Kind::Rl),
        Command::RunBandit(args) => run(args, Kind::Bandit),
        Command::Audit { suite, config, seed } => (|| {
            let config = load(&config, &[], Kind::Audit)?;
            let Experiment::Audit(params) = &config.experiment else { unreachable!() };
            let suite = suite
                .or(params.suite)
                .ok_or_else(|| Failure::Validation("no suite given on the command line or in [audit]".into()))?;
            let report = audit::run_audit(suite, params, seed.unwrap_or(config.seed))?;
            print!("{}", report.render());
            if report.passed() { Ok(()) } else { Err(Failure::Audit) }
        })(),
        Command::Sweep {
            param,
            values,
            config,
            out,
            plot,
        } => (|| {
            if values.is_empty() {
                return Err(Failure::Validation("--values needs at least one value".into()));
            }
            let configs = values
                .iter()
                .map(|v| parse_config_with(&config, &[(param.clone(), v.clone())]).map(|c| (v, c)))
                .collect::<Result<Vec<_>, _>>()?;
            for (value, mut c) in configs {
                if c.kind() == Kind::Audit {
                    return Err(Failure::Validation("sweep needs an rl or bandit configuration".into()));
                }
                c.out_dir = out.clone().unwrap_or_else(|| c.out_dir.clone()).join(format!("{param}={value}"));
                c.plot |= plot;
                println!("{param} = {value}");
                execute(&c, &format!("{param} = {value}"))?;
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Audit) => ExitCode::from(EXIT_AUDIT),
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
