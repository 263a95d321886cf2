//! Run artifacts: `trace.csv`, `metrics.json`, `config.echo` and, on
//! request, `truth.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ipsukf::analysis::Metrics;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{Outcome, RunStatus};

pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ECHO_FILE: &str = "config.echo";
pub const TRUTH_FILE: &str = "truth.csv";

/// Header of the per-step trace.
pub fn trace_header(outcome: &Outcome) -> Vec<String> {
    let n = outcome.config.n_dof();
    let params = outcome.parameter_names();
    let unknown = &outcome.config.inputs.unknown_dofs;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("v{i}")));
    cols.extend(params.iter().cloned());
    for dof in unknown {
        cols.push(format!("u{dof}_stage1"));
        cols.push(format!("u{dof}_stage2"));
    }
    let state_names = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=n).map(|i| format!("v{i}")))
        .chain(params);
    cols.extend(state_names.map(|s| format!("var_{s}")));
    cols
}

pub fn trace_csv(outcome: &Outcome) -> String {
    let mut out = trace_header(outcome).join(",");
    out.push('\n');
    let unknown = &outcome.config.inputs.unknown_dofs;
    for step in &outcome.report.steps {
        let mut row: Vec<f64> = vec![step.time];
        row.extend(step.state.as_vector().iter());
        for dof in unknown {
            row.push(step.stage1_input.values()[dof - 1]);
            row.push(step.input_estimate.values()[dof - 1]);
        }
        row.extend(step.covariance.diagonal());
        push_row(&mut out, &row);
    }
    out
}

/// True state, acceleration and input at every sample.
pub fn truth_csv(outcome: &Outcome) -> String {
    let n = outcome.config.n_dof();
    let mut cols = vec!["t".to_string()];
    for prefix in ["x", "v", "a", "u"] {
        cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    let mut out = cols.join(",");
    out.push('\n');
    let truth = &outcome.truth;
    for k in 0..truth.len() {
        let mut row = vec![truth.times[k]];
        row.extend(truth.states[k].iter());
        row.extend(truth.accelerations[k].iter());
        row.extend(truth.inputs[k].iter());
        push_row(&mut out, &row);
    }
    out
}

fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // `{}` prints the shortest representation that round-trips.
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

#[derive(Debug, Serialize)]
pub struct Initialization<'a> {
    pub displacements: Vec<f64>,
    pub velocities: Vec<f64>,
    pub parameters: &'a [f64],
    pub p0_state: f64,
    pub p0_param: f64,
    pub input: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct MetricsDocument<'a> {
    pub name: &'a str,
    pub seed: u64,
    pub status: RunStatus,
    pub diverged: bool,
    pub failure: Option<String>,
    pub steps_completed: usize,
    pub parameter_names: Vec<String>,
    pub true_parameters: &'a [f64],
    pub initialization: Initialization<'a>,
    pub input_peak_time: Vec<Option<f64>>,
    pub metrics: &'a Metrics,
    pub config: &'a ExperimentConfig,
}

pub fn metrics_document(outcome: &Outcome) -> MetricsDocument<'_> {
    let n = outcome.config.n_dof();
    MetricsDocument {
        name: &outcome.config.name,
        seed: outcome.seed,
        status: outcome.status,
        diverged: outcome.report.diverged,
        failure: outcome.report.failure.as_ref().map(ToString::to_string),
        steps_completed: outcome.report.steps.len(),
        parameter_names: outcome.parameter_names(),
        true_parameters: &outcome.true_theta,
        initialization: Initialization {
            displacements: vec![0.0; n],
            velocities: vec![0.0; n],
            parameters: &outcome.initial_theta,
            p0_state: outcome.config.init.p0_state,
            p0_param: outcome.config.init.p0_param,
            input: outcome.config.known_input_values(),
        },
        input_peak_time: outcome
            .config
            .inputs
            .unknown_dofs
            .iter()
            .map(|dof| outcome.input_peak_time(*dof))
            .collect(),
        metrics: &outcome.metrics,
        config: &outcome.config,
    }
}

pub fn metrics_json(outcome: &Outcome) -> String {
    let mut text = serde_json::to_string_pretty(&metrics_document(outcome))
        .expect("metrics serialize to JSON");
    text.push('\n');
    text
}

/// Writes the artifacts of `outcome` into `dir`, creating it if needed.
pub fn write_outcome(
    outcome: &Outcome,
    dir: &Path,
    with_truth: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = vec![
        (dir.join(TRACE_FILE), trace_csv(outcome)),
        (dir.join(METRICS_FILE), metrics_json(outcome)),
        (dir.join(ECHO_FILE), outcome.config.to_toml_string()),
    ];
    if with_truth {
        files.push((dir.join(TRUTH_FILE), truth_csv(outcome)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
