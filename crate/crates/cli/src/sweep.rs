//! Seed sweeps: one independent run per seed, in parallel.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{run_experiment, Outcome, RunStatus};
use crate::export::write_outcome;

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// `None` when the run could not be carried out at all.
    pub status: Option<RunStatus>,
    pub error: Option<String>,
    pub param_mean_rel_error: Vec<f64>,
    pub param_final_estimate: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub parameter_names: Vec<String>,
    pub true_parameters: Vec<f64>,
    pub runs: Vec<SeedSummary>,
    pub converged: usize,
    pub not_converged: usize,
    pub diverged: usize,
    pub failed: usize,
    pub convergence_rate: f64,
    /// Median over seeds of the trailing-window mean |relative error|.
    pub median_mean_rel_error: Vec<f64>,
    /// Cross-seed standard deviation of the final parameter estimates.
    pub final_estimate_dispersion: Vec<f64>,
}

impl SweepReport {
    pub fn summary(&self, seed: u64) -> Option<&SeedSummary> {
        self.runs.iter().find(|r| r.seed == seed)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Population standard deviation of the finite entries.
pub fn dispersion(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Runs every seed. Per-seed failures are recorded; the aggregate is always
/// produced. When `out` is given each run writes into `out/seed-<n>`.
pub fn sweep(
    config: &ExperimentConfig,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<(SweepReport, Vec<Outcome>), CliError> {
    if seeds.len() < 2 {
        return Err(CliError::TooFewSeeds(seeds.len()));
    }
    config.validate()?;
    let results: Vec<(u64, Result<Outcome, CliError>)> = seeds
        .par_iter()
        .map(|&seed| {
            let result = run_experiment(config, seed).and_then(|outcome| {
                if let Some(dir) = out {
                    write_outcome(&outcome, &dir.join(format!("seed-{seed}")), false)?;
                }
                Ok(outcome)
            });
            (seed, result)
        })
        .collect();

    let model = config.build_model()?;
    let true_parameters = model.theta_of(&config.true_params());
    let n_params = true_parameters.len();
    let mut runs = Vec::with_capacity(results.len());
    let mut outcomes = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(outcome) => {
                runs.push(SeedSummary {
                    seed,
                    status: Some(outcome.status),
                    error: None,
                    param_mean_rel_error: outcome.metrics.param_mean_rel_error.clone(),
                    param_final_estimate: outcome.metrics.param_final_estimate.clone(),
                });
                outcomes.push(outcome);
            }
            Err(e) => runs.push(SeedSummary {
                seed,
                status: None,
                error: Some(e.to_string()),
                param_mean_rel_error: vec![f64::NAN; n_params],
                param_final_estimate: vec![f64::NAN; n_params],
            }),
        }
    }

    let count = |s: RunStatus| runs.iter().filter(|r| r.status == Some(s)).count();
    let converged = count(RunStatus::Converged);
    let column = |j: usize, f: fn(&SeedSummary) -> &Vec<f64>| -> Vec<f64> {
        runs.iter().map(|r| f(r)[j]).collect()
    };
    let report = SweepReport {
        name: config.name.clone(),
        parameter_names: model.slots().iter().map(ToString::to_string).collect(),
        median_mean_rel_error: (0..n_params)
            .map(|j| median(&column(j, |r| &r.param_mean_rel_error)))
            .collect(),
        final_estimate_dispersion: (0..n_params)
            .map(|j| dispersion(&column(j, |r| &r.param_final_estimate)))
            .collect(),
        true_parameters,
        converged,
        not_converged: count(RunStatus::NotConverged),
        diverged: count(RunStatus::Diverged),
        failed: runs.iter().filter(|r| r.status.is_none()).count(),
        convergence_rate: converged as f64 / runs.len() as f64,
        runs,
    };
    Ok((report, outcomes))
}
