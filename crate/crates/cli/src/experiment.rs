//! One experiment: truth, noisy measurements, filter run, metrics.

use std::time::{Duration, Instant};

use ipsukf::analysis::{compute_metrics, Metrics};
use ipsukf::simulator::{rk4_simulate, synthesize_measurements};
use ipsukf::{
    AugmentedState, ChainModel, Covariance, Error, FilterConfig, InputFrame, IpsUkf, NoiseSpec,
    RunReport, StepResult, SystemModel, Trajectory, Ukf,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{Estimator, ExperimentConfig};
use crate::error::{exit, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Diverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Converged => exit::CONVERGED,
            Self::NotConverged => exit::NOT_CONVERGED,
            Self::Diverged => exit::DIVERGED,
        }
    }
}

/// Everything produced by one seeded run.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// The config restricted to the seed that was run.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub model: ChainModel,
    pub truth: Trajectory,
    pub measurements: Vec<DVector<f64>>,
    pub true_theta: Vec<f64>,
    pub initial_theta: Vec<f64>,
    pub report: RunReport,
    pub metrics: Metrics,
    pub status: RunStatus,
    pub wall_clock: Duration,
}

impl Outcome {
    pub fn parameter_names(&self) -> Vec<String> {
        self.model.parameter_names()
    }

    /// Time of the largest |stage-2 input| on a DOF (1-based).
    pub fn input_peak_time(&self, dof: usize) -> Option<f64> {
        self.report
            .steps
            .iter()
            .max_by(|a, b| {
                let va = a.input_estimate.values()[dof - 1].abs();
                let vb = b.input_estimate.values()[dof - 1].abs();
                va.total_cmp(&vb)
            })
            .map(|s| s.time)
    }
}

/// Generates the truth and measurements for `seed`, runs the configured
/// filter from sample 1 onward and scores it.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    config.validate()?;
    let started = Instant::now();
    let config = config.for_seed(seed);
    let n = config.n_dof();
    let f = &config.filter;

    let params = config.true_params();
    let excitation = config.excitation.reseeded(seed);
    let zeros = vec![0.0; n];
    let truth = rk4_simulate(&params, &excitation, &zeros, &zeros, f.dt, f.duration)?;
    let noise = NoiseSpec {
        rms_ratio: config.noise.rms_ratio,
        seed,
    };
    let measurements = synthesize_measurements(&truth, config.layout, &noise)?;

    let model = config.build_model()?;
    let true_theta = model.theta_of(&params);
    let initial_theta = match &config.init.param_guess {
        Some(guess) => guess.clone(),
        None => true_theta
            .iter()
            .map(|t| t * config.init.param_guess_ratio)
            .collect(),
    };
    let z0 = AugmentedState::from_parts(&zeros, &zeros, &initial_theta)?;
    let mut p0 = vec![config.init.p0_state; 2 * n];
    p0.extend(std::iter::repeat_n(
        config.init.p0_param,
        initial_theta.len(),
    ));
    let p0 = Covariance::from_diagonal(&p0);

    let filter_config = FilterConfig::new(
        DMatrix::from_diagonal(&DVector::from_vec(f.q_diag.clone())),
        DMatrix::from_diagonal(&DVector::from_vec(f.r_diag.clone())),
        f.dt,
    )
    .with_unscented(config.unscented());

    let report = match f.estimator {
        Estimator::IpsUkf => {
            let filter = IpsUkf::new(model.clone(), filter_config)?
                .with_divergence_guard(f.divergence_guard);
            let u0 = InputFrame::initial(
                config.known_input_mask(),
                DVector::from_vec(config.known_input_values()),
            )?;
            let init = filter.initial_state(z0, p0, u0)?;
            filter.run(&measurements[1..], init)?
        }
        Estimator::Ukf => run_plain_ukf(
            model.clone(),
            filter_config,
            z0,
            p0,
            &truth,
            &measurements,
            f.divergence_guard,
        )?,
    };

    let metrics = compute_metrics(
        &report,
        &truth,
        &true_theta,
        config.metrics_window(),
        config.thresholds(),
    )?;
    let status = if metrics.diverged {
        RunStatus::Diverged
    } else if metrics.converged {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    };

    Ok(Outcome {
        seed,
        model,
        truth,
        measurements,
        true_theta,
        initial_theta,
        report,
        metrics,
        status,
        wall_clock: started.elapsed(),
        config,
    })
}

/// Standard joint UKF with the true input supplied at every step.
fn run_plain_ukf(
    model: ChainModel,
    config: FilterConfig,
    z0: AugmentedState,
    p0: Covariance,
    truth: &Trajectory,
    measurements: &[DVector<f64>],
    guard: f64,
) -> Result<RunReport, CliError> {
    let dt = config.dt;
    let mut ukf = Ukf::new(model, config, z0, p0)?;
    let mut steps = Vec::with_capacity(measurements.len().saturating_sub(1));
    for k in 1..measurements.len() {
        let outcome = ukf
            .step(&measurements[k], &truth.inputs[k - 1], &truth.inputs[k])
            .and_then(|()| {
                let peak = ukf.state().max_abs();
                if peak <= guard {
                    Ok(())
                } else {
                    Err(Error::Divergence {
                        step: k,
                        reason: format!("state magnitude {peak:e} exceeds guard {guard:e}"),
                    })
                }
            });
        if let Err(err) = outcome {
            if matches!(err, Error::Dimension { .. }) {
                return Err(err.into());
            }
            return Ok(RunReport {
                steps,
                diverged: true,
                failure: Some(err),
            });
        }
        let input = InputFrame::unknown(truth.inputs[k].clone());
        steps.push(StepResult {
            state: ukf.state().clone(),
            covariance: ukf.covariance().clone(),
            input_estimate: input.clone(),
            stage1_input: input,
            step_index: k,
            time: k as f64 * dt,
        });
    }
    Ok(RunReport {
        steps,
        diverged: false,
        failure: None,
    })
}
