use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipsukf_cli::error::exit;
use ipsukf_cli::experiment::Outcome;
use ipsukf_cli::export::{write_json, write_outcome};
use ipsukf_cli::{output_dir, presets, run_experiment, sweep, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ipsukf",
    version,
    about = "Input-parameter-state UKF experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the first seed of a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the true trajectory.
        #[arg(long)]
        truth: bool,
    },
    /// Run a built-in experiment.
    Preset {
        name: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        truth: bool,
    },
    /// Run a config (file or preset name) over several seeds in parallel.
    Sweep {
        config: String,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the names of the built-in experiments.
    ListPresets,
}

fn load(source: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(source);
    if path.exists() {
        ExperimentConfig::load(path)
    } else {
        presets::preset(source)
    }
}

fn report(outcome: &Outcome, dir: &Path) {
    let names = outcome.parameter_names();
    println!(
        "{} seed {}: {:?} after {} steps in {:.2?}",
        outcome.config.name,
        outcome.seed,
        outcome.status,
        outcome.report.steps.len(),
        outcome.wall_clock
    );
    if let Some(failure) = &outcome.report.failure {
        println!("  failure: {failure}");
    }
    for (j, name) in names.iter().enumerate() {
        println!(
            "  {name:>4}: true {:>8.4}  estimate {:>10.4}  mean |rel err| {:.4}",
            outcome.true_theta[j],
            outcome.metrics.param_final_estimate[j],
            outcome.metrics.param_mean_rel_error[j]
        );
    }
    println!("  artifacts in {}", dir.display());
}

fn single(
    config: ExperimentConfig,
    seed: u64,
    out: Option<PathBuf>,
    truth: bool,
) -> Result<i32, CliError> {
    let outcome = run_experiment(&config, seed)?;
    let dir = output_dir(out.as_deref(), &config, seed);
    write_outcome(&outcome, &dir, truth)?;
    report(&outcome, &dir);
    Ok(outcome.status.exit_code())
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            truth,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let seed = seed.unwrap_or(config.seeds[0]);
            single(config, seed, out, truth)
        }
        Command::Preset {
            name,
            seed,
            out,
            truth,
        } => single(presets::preset(&name)?, seed, out, truth),
        Command::Sweep { config, seeds, out } => {
            let config = load(&config)?;
            let seeds = seeds.unwrap_or_else(|| config.seeds.clone());
            let root = out.unwrap_or_else(|| {
                output_dir(None, &config, 0)
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default()
            });
            let (summary, _) = sweep(&config, &seeds, Some(&root))?;
            write_json(&summary, &root.join("sweep.json"))?;
            println!(
                "{}: {}/{} converged, {} not converged, {} diverged, {} failed",
                summary.name,
                summary.converged,
                summary.runs.len(),
                summary.not_converged,
                summary.diverged,
                summary.failed
            );
            for (j, name) in summary.parameter_names.iter().enumerate() {
                println!(
                    "  {name:>4}: median mean |rel err| {:.4}  dispersion {:.4}",
                    summary.median_mean_rel_error[j], summary.final_estimate_dispersion[j]
                );
            }
            println!("  summary in {}", root.join("sweep.json").display());
            Ok(exit::CONVERGED)
        }
        Command::ListPresets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            Ok(exit::CONVERGED)
        }
    }
}

fn main() -> ExitCode {
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
