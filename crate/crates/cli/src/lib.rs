//! Experiment runner for the input–parameter–state UKF: TOML configs,
//! built-in presets, seeded runs, parallel sweeps and CSV/JSON export.

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod presets;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, ConfigError};
pub use experiment::{run_experiment, Outcome, RunStatus};
pub use sweep::{sweep, SweepReport};

/// Environment variable holding the default output root.
pub const OUTPUT_ROOT_VAR: &str = "IPSUKF_OUT";

/// Output directory of one run: `explicit`, else the config's own
/// directory, else `$IPSUKF_OUT/<name>/seed-<seed>` (falling back to `runs/`).
pub fn output_dir(
    explicit: Option<&std::path::Path>,
    config: &ExperimentConfig,
    seed: u64,
) -> std::path::PathBuf {
    if let Some(dir) = explicit {
        return dir.to_path_buf();
    }
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_VAR)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| "runs".into());
    root.join(&config.name).join(format!("seed-{seed}"))
}
