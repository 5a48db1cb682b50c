use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use risloc::harness::{self, ConfigError, ExperimentConfig, Profile};

#[derive(Parser)]
#[command(name = "risloc", version, about = "RIS-aided positioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo sweep and write results.csv
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profile: Option<Profile>,
        /// Also write one JSON line per trial and method to trials.jsonl
        #[arg(long)]
        log: bool,
    },
    /// Print PEB and CEB for every sweep value
    Peb {
        config: PathBuf,
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Print the RIS phase profile of the configured scene
    Design {
        config: PathBuf,
        #[arg(long)]
        profile: Option<Profile>,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<risloc::Error> for Failure {
    fn from(e: risloc::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &PathBuf, profile: Option<Profile>) -> Result<ExperimentConfig, Failure> {
    Ok(harness::parse_config(path, profile)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            profile,
            log,
        } => {
            let mut config = load(&config, profile)?;
            if let Some(t) = trials {
                config.trials = t;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            config.validate()?;
            std::fs::create_dir_all(&out)?;
            let output = harness::run_sweep(&config)?;
            let csv_path = out.join("results.csv");
            harness::write_csv(&output.rows, BufWriter::new(File::create(&csv_path)?))?;
            if log {
                harness::write_jsonl(&output.records, BufWriter::new(File::create(out.join("trials.jsonl"))?))?;
            }
            for r in &output.rows {
                println!(
                    "{}={} {:<16} rmse {:.4e} m  peb {:.4e} m  ok {}/{}",
                    r.variable, r.value, r.method, r.rmse_position, r.peb, r.trials_ok, r.trials
                );
            }
            eprintln!("wrote {}", csv_path.display());
        }
        Command::Peb { config, profile } => {
            let config = load(&config, profile)?;
            println!("sweep_variable,value,peb,ceb");
            for (value, bounds) in harness::bounds_table(&config)? {
                let (peb, ceb) = bounds.map_or((f64::NAN, f64::NAN), |b| (b.peb, b.ceb));
                println!(
                    "{},{},{},{}",
                    config.sweep.variable.name(),
                    value,
                    harness::sweep::format_float(peb),
                    harness::sweep::format_float(ceb)
                );
            }
        }
        Command::Design { config, profile } => {
            let config = load(&config, profile)?;
            let key = harness::sweep::point_key(&config, None);
            let profile = harness::run::design_profile(&config, &config.scene(), key)?;
            println!("ris,element,phase_rad");
            for (q, phases) in profile.phases().iter().enumerate() {
                for (m, p) in phases.iter().enumerate() {
                    println!(
                        "{q},{m},{}",
                        harness::sweep::format_float(p.rem_euclid(std::f64::consts::TAU))
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
