//! Two-stage input estimation on top of the UKF (IPS-UKF).
//!
//! Within each sample the unknown force is recovered twice from the measured
//! accelerations: once from the predicted mean (stage 1, used to build the
//! measurement sigma images) and once from the corrected mean (stage 2, the
//! final estimate that drives the next prediction). Rows declared known are
//! overwritten after each stage.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::filter::{
    compute_weights, generate_sigma_points, predict, update, AugmentedState, Covariance,
    FilterConfig, WeightSet,
};
use crate::models::SystemModel;

/// Per-DOF force vector with the rows whose value is known in advance.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFrame {
    values: DVector<f64>,
    known_mask: Vec<bool>,
    known_values: DVector<f64>,
}

impl InputFrame {
    pub fn new(
        values: DVector<f64>,
        known_mask: Vec<bool>,
        known_values: DVector<f64>,
    ) -> Result<Self> {
        check_dim("input known mask", values.len(), known_mask.len())?;
        check_dim("input known values", values.len(), known_values.len())?;
        Ok(Self {
            values,
            known_mask,
            known_values,
        })
    }

    /// Zero on unknown rows, known values elsewhere.
    pub fn initial(known_mask: Vec<bool>, known_values: DVector<f64>) -> Result<Self> {
        let n = known_mask.len();
        Ok(apply_known_mask(Self::new(
            DVector::zeros(n),
            known_mask,
            known_values,
        )?))
    }

    /// Every row unknown.
    pub fn unknown(values: DVector<f64>) -> Self {
        let n = values.len();
        Self {
            values,
            known_mask: vec![false; n],
            known_values: DVector::zeros(n),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn known_mask(&self) -> &[bool] {
        &self.known_mask
    }

    pub fn known_values(&self) -> &DVector<f64> {
        &self.known_values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn unknown_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.known_mask
            .iter()
            .enumerate()
            .filter(|(_, k)| !**k)
            .map(|(i, _)| i)
    }

    /// Same mask, new values (not masked).
    pub fn with_values(&self, values: DVector<f64>) -> Self {
        Self {
            values,
            known_mask: self.known_mask.clone(),
            known_values: self.known_values.clone(),
        }
    }

    pub fn is_masked(&self) -> bool {
        self.known_mask
            .iter()
            .zip(self.values.iter().zip(self.known_values.iter()))
            .all(|(k, (v, kv))| !k || v.to_bits() == kv.to_bits())
    }
}

/// Overwrites the known rows with their known values.
pub fn apply_known_mask(mut raw: InputFrame) -> InputFrame {
    for i in 0..raw.values.len() {
        if raw.known_mask[i] {
            raw.values[i] = raw.known_values[i];
        }
    }
    raw
}

/// Force recovered from measured accelerations and the displacements,
/// velocities and parameters in `state`. Known rows are not yet masked.
pub fn estimate_input<M: SystemModel + ?Sized>(
    accel_meas: &DVector<f64>,
    state: &AugmentedState,
    model: &M,
    template: &InputFrame,
    step: usize,
) -> Result<InputFrame> {
    check_dim("measured accelerations", model.n_dof(), accel_meas.len())?;
    check_dim("augmented state", model.state_len(), state.len())?;
    check_dim("input frame", model.n_dof(), template.len())?;
    let u = model.recover_input(accel_meas, state.as_vector());
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            reason: "non-finite input estimate".into(),
        });
    }
    Ok(template.with_values(u))
}

/// Filter state carried between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub state: AugmentedState,
    pub covariance: Covariance,
    /// Final (stage-2) input estimate of the last processed sample.
    pub input: InputFrame,
    pub step: usize,
}

/// Trace record of one processed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: AugmentedState,
    pub covariance: Covariance,
    /// Final input estimate, from the corrected state.
    pub input_estimate: InputFrame,
    /// Input estimate from the predicted state.
    pub stage1_input: InputFrame,
    pub step_index: usize,
    /// Seconds, `step_index · dt`.
    pub time: f64,
}

impl StepResult {
    pub fn filter_state(&self) -> FilterState {
        FilterState {
            state: self.state.clone(),
            covariance: self.covariance.clone(),
            input: self.input_estimate.clone(),
            step: self.step_index,
        }
    }
}

/// Outcome of a sequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<StepResult>,
    pub diverged: bool,
    /// The error that stopped the run, if any.
    pub failure: Option<Error>,
}

impl RunReport {
    pub fn last(&self) -> Option<&StepResult> {
        self.steps.last()
    }
}

pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e6;

/// Input–parameter–state UKF bound to one model and configuration.
#[derive(Debug, Clone)]
pub struct IpsUkf<M> {
    model: M,
    config: FilterConfig,
    weights: WeightSet,
    accel_offset: usize,
    guard: f64,
}

impl<M: SystemModel> IpsUkf<M> {
    pub fn new(model: M, config: FilterConfig) -> Result<Self> {
        let layout = model.observation_layout();
        layout.validate()?;
        let l = model.state_len();
        config.validate(l, model.observation_dim())?;
        let weights = compute_weights(l, &config.unscented)?;
        Ok(Self {
            accel_offset: layout.acceleration_offset(model.n_dof()),
            model,
            config,
            weights,
            guard: DEFAULT_DIVERGENCE_GUARD,
        })
    }

    /// Largest state magnitude tolerated before a step is flagged as diverged.
    pub fn with_divergence_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    /// Builds the state at `k = 0`.
    pub fn initial_state(
        &self,
        z0: AugmentedState,
        p0: Covariance,
        u0: InputFrame,
    ) -> Result<FilterState> {
        let l = self.model.state_len();
        check_dim("initial state", l, z0.len())?;
        check_dim("initial covariance", l, p0.dim())?;
        check_dim("initial input", self.model.n_dof(), u0.len())?;
        Ok(FilterState {
            state: z0,
            covariance: p0,
            input: apply_known_mask(u0),
            step: 0,
        })
    }

    /// Processes the measurement of sample `current.step + 1`.
    pub fn ips_step(&self, current: &FilterState, y_meas: &DVector<f64>) -> Result<StepResult> {
        let step = current.step + 1;
        let n = self.model.n_dof();
        check_dim("measurement", self.model.observation_dim(), y_meas.len())?;
        let accel = y_meas.rows(self.accel_offset, n).into_owned();

        let sigma =
            generate_sigma_points(&current.state, &current.covariance, &self.config.unscented)?;
        let prediction = predict(
            &sigma,
            &self.weights,
            &self.model,
            current.input.values(),
            &self.config,
            step,
        )?;

        let stage1 = apply_known_mask(estimate_input(
            &accel,
            &prediction.state,
            &self.model,
            &current.input,
            step,
        )?);

        let (state, covariance) = update(
            &prediction,
            &self.weights,
            y_meas,
            &self.model,
            stage1.values(),
            &self.config,
            step,
        )?;

        let stage2 = apply_known_mask(estimate_input(
            &accel,
            &state,
            &self.model,
            &current.input,
            step,
        )?);

        let peak = state.max_abs();
        if !(peak <= self.guard) {
            return Err(Error::Divergence {
                step,
                reason: format!("state magnitude {peak:e} exceeds guard {:e}", self.guard),
            });
        }

        Ok(StepResult {
            state,
            covariance,
            input_estimate: stage2,
            stage1_input: stage1,
            step_index: step,
            time: step as f64 * self.config.dt,
        })
    }

    /// Runs over `measurements`, where element `j` is the measurement of
    /// sample `init.step + j + 1`. Stops at the first failing step.
    pub fn run(&self, measurements: &[DVector<f64>], init: FilterState) -> Result<RunReport> {
        if measurements.is_empty() {
            return Err(Error::Config("measurement sequence is empty".into()));
        }
        let mut steps = Vec::with_capacity(measurements.len());
        let mut current = init;
        for y in measurements {
            match self.ips_step(&current, y) {
                Ok(result) => {
                    current = result.filter_state();
                    steps.push(result);
                }
                Err(err @ Error::Dimension { .. }) => return Err(err),
                Err(err) => {
                    return Ok(RunReport {
                        steps,
                        diverged: true,
                        failure: Some(err),
                    })
                }
            }
        }
        Ok(RunReport {
            steps,
            diverged: false,
            failure: None,
        })
    }
}
