//! Identifiability diagnostics and run metrics.
//!
//! A perturbation `(ΔC, ΔK, Δu)` of a chain is *equivalent* when the perturbed
//! system driven by `u + Δu` reproduces the original response. Moving the
//! perturbation to the right-hand side gives the equivalent input
//! `ū = u + Δu − ΔC ẋ − ΔK x` acting on the nominal system. On rows where the
//! input is known, any `ū ≠ u` exposes the perturbation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::input::RunReport;
use crate::models::ChainParams;
use crate::simulator::{excitation_sample, rk4_step, ExcitationSpec, Trajectory};

/// Input part of a perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum InputPerturbation {
    Zero,
    /// `Δu(t) = D_c ẋ(t) + D_k x(t)` along the original response.
    StateProportional {
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
    },
    /// One vector per trajectory sample, held over the sample.
    Samples(Vec<DVector<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub delta_c: DMatrix<f64>,
    pub delta_k: DMatrix<f64>,
    pub delta_u: InputPerturbation,
}

impl PerturbationSpec {
    pub fn zero(n_dof: usize) -> Self {
        Self {
            delta_c: DMatrix::zeros(n_dof, n_dof),
            delta_k: DMatrix::zeros(n_dof, n_dof),
            delta_u: InputPerturbation::Zero,
        }
    }

    fn validate(&self, n: usize, samples: usize) -> Result<()> {
        for m in [&self.delta_c, &self.delta_k] {
            check_dim("perturbation matrix rows", n, m.nrows())?;
            check_dim("perturbation matrix columns", n, m.ncols())?;
        }
        match &self.delta_u {
            InputPerturbation::Zero => Ok(()),
            InputPerturbation::StateProportional { damping, stiffness } => {
                for m in [damping, stiffness] {
                    check_dim("input perturbation rows", n, m.nrows())?;
                    check_dim("input perturbation columns", n, m.ncols())?;
                }
                Ok(())
            }
            InputPerturbation::Samples(s) => {
                check_dim("input perturbation samples", samples, s.len())?;
                s.iter()
                    .try_for_each(|v| check_dim("input perturbation", n, v.len()))
            }
        }
    }

    fn delta_u_at(&self, k: usize, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match &self.delta_u {
            InputPerturbation::Zero => DVector::zeros(x.len()),
            InputPerturbation::StateProportional { damping, stiffness } => {
                damping * v + stiffness * x
            }
            InputPerturbation::Samples(s) => s[k].clone(),
        }
    }
}

fn split(traj: &Trajectory, k: usize) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_column_slice(traj.displacement(k)),
        DVector::from_column_slice(traj.velocity(k)),
    )
}

/// `ū_k = u_k + Δu_k − ΔC ẋ_k − ΔK x_k` on the trajectory grid.
pub fn equivalent_input(traj: &Trajectory, pert: &PerturbationSpec) -> Result<Vec<DVector<f64>>> {
    pert.validate(traj.n_dof(), traj.len())?;
    Ok((0..traj.len())
        .map(|k| {
            let (x, v) = split(traj, k);
            let du = pert.delta_u_at(k, &x, &v);
            &traj.inputs[k] + (du - &pert.delta_c * &v - &pert.delta_k * &x)
        })
        .collect())
}

/// Outcome of [`verify_equivalence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// Max |state difference| between the perturbed re-simulation and the
    /// original trajectory.
    pub max_state_deviation: f64,
    /// Max |(perturbed EOM residual) − (nominal EOM residual under ū)| along
    /// the original trajectory; zero up to round-off.
    pub max_identity_residual: f64,
    /// Max |perturbed EOM residual| along the original trajectory.
    pub max_perturbed_residual: f64,
    /// Max |ū − u| over the rows declared known.
    pub known_input_violation: f64,
}

/// Re-simulates the perturbed chain `(C + ΔC, K + ΔK)` driven by `u + Δu` and
/// compares it with `traj`, which must come from `truth` under `excitation`.
pub fn verify_equivalence(
    truth: &ChainParams,
    excitation: &ExcitationSpec,
    pert: &PerturbationSpec,
    traj: &Trajectory,
    known_mask: &[bool],
) -> Result<EquivalenceReport> {
    let n = truth.n_dof();
    check_dim("trajectory DOF", n, traj.n_dof())?;
    check_dim("known input mask", n, known_mask.len())?;
    pert.validate(n, traj.len())?;
    if traj.is_empty() {
        return Err(Error::Analysis("empty trajectory".into()));
    }
    let dt = traj.dt;
    let mass = truth.mass_matrix();

    // Joint integration of [nominal; perturbed] so that a state-proportional
    // Δu sees the nominal response inside every RK4 stage.
    let nominal_force = |x: &[f64], v: &[f64]| DVector::from_vec(truth.restoring_force(x, v));
    let mut joint = DVector::zeros(4 * n);
    joint.rows_mut(0, 2 * n).copy_from(&traj.states[0]);
    joint.rows_mut(2 * n, 2 * n).copy_from(&traj.states[0]);
    let mut max_dev = 0.0f64;
    for k in 0..traj.len() {
        let dev = (joint.rows(2 * n, 2 * n) - &traj.states[k]).amax();
        if !dev.is_finite() {
            return Err(Error::SimulationBlowUp {
                sample: k,
                time: traj.times[k],
            });
        }
        max_dev = max_dev.max(dev);
        if k + 1 == traj.len() {
            break;
        }
        let u = excitation_sample(excitation, n, traj.times[k], dt);
        let rhs = |s: &DVector<f64>| {
            let xn = s.rows(0, n).into_owned();
            let vn = s.rows(n, n).into_owned();
            let xp = s.rows(2 * n, n).into_owned();
            let vp = s.rows(3 * n, n).into_owned();
            let du = pert.delta_u_at(k, &xn, &vn);
            let fn_ = nominal_force(xn.as_slice(), vn.as_slice());
            let fp = nominal_force(xp.as_slice(), vp.as_slice())
                + &pert.delta_c * &vp
                + &pert.delta_k * &xp;
            let mut d = DVector::zeros(4 * n);
            for i in 0..n {
                d[i] = vn[i];
                d[n + i] = (u[i] - fn_[i]) / truth.masses[i];
                d[2 * n + i] = vp[i];
                d[3 * n + i] = (u[i] + du[i] - fp[i]) / truth.masses[i];
            }
            d
        };
        joint = rk4_step(rhs, &joint, dt);
    }

    let u_bar = equivalent_input(traj, pert)?;
    let mut identity = 0.0f64;
    let mut perturbed = 0.0f64;
    let mut violation = 0.0f64;
    for k in 0..traj.len() {
        let (x, v) = split(traj, k);
        let inertia = &mass * &traj.accelerations[k];
        let internal = nominal_force(x.as_slice(), v.as_slice());
        let du = pert.delta_u_at(k, &x, &v);
        let res_pert =
            &inertia + &internal + &pert.delta_c * &v + &pert.delta_k * &x - (&traj.inputs[k] + du);
        let res_bar = &inertia + &internal - &u_bar[k];
        identity = identity.max((&res_pert - res_bar).amax());
        perturbed = perturbed.max(res_pert.amax());
        for (i, known) in known_mask.iter().enumerate() {
            if *known {
                violation = violation.max((u_bar[k][i] - traj.inputs[k][i]).abs());
            }
        }
    }
    Ok(EquivalenceReport {
        max_state_deviation: max_dev,
        max_identity_residual: identity,
        max_perturbed_residual: perturbed,
        known_input_violation: violation,
    })
}

/// Convergence criterion on trailing-window parameter errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceThresholds {
    /// Upper bound on the trailing mean |relative error|.
    pub mean_rel_error: f64,
    /// Upper bound on the trailing standard deviation of the relative error.
    pub std_rel_error: f64,
}

impl Default for ConvergenceThresholds {
    fn default() -> Self {
        Self {
            mean_rel_error: 0.10,
            std_rel_error: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Relative error `(θ̂ − θ)/θ` of every parameter at every step.
    #[serde(skip)]
    pub param_rel_error_traces: Vec<Vec<f64>>,
    /// Trailing-window mean of |relative error|, per parameter.
    pub param_mean_rel_error: Vec<f64>,
    /// Trailing-window standard deviation of the relative error, per parameter.
    pub param_std_rel_error: Vec<f64>,
    /// Trailing-window mean of each parameter estimate.
    pub param_final_estimate: Vec<f64>,
    /// RMSE (N) of the final input estimate over the trailing window, per DOF.
    pub input_rmse: Vec<f64>,
    /// RMSE of each state channel (`x…`, then `ẋ…`) over the trailing window.
    pub state_rmse: Vec<f64>,
    /// First time (s) after which |relative error| stays below the mean
    /// threshold, per parameter.
    pub convergence_time: Vec<Option<f64>>,
    pub converged: bool,
    pub diverged: bool,
    pub steps_completed: usize,
    pub window_steps: usize,
}

/// Window-based metrics of a run against the truth it was generated from.
/// Step `k` of the report is compared with truth sample `k`.
pub fn compute_metrics(
    report: &RunReport,
    truth: &Trajectory,
    true_params: &[f64],
    window: f64,
    thresholds: ConvergenceThresholds,
) -> Result<Metrics> {
    let steps = &report.steps;
    let n_params = true_params.len();
    if let Some(first) = steps.first() {
        check_dim("true parameters", first.state.parameters().len(), n_params)?;
    }
    if !(window > 0.0) {
        return Err(Error::Analysis("metrics window must be positive".into()));
    }
    let mut window_steps = (window / truth.dt).round() as usize;
    if window_steps > steps.len() {
        if report.diverged {
            window_steps = steps.len();
        } else {
            return Err(Error::Analysis(format!(
                "window of {window_steps} samples exceeds the {} completed steps",
                steps.len()
            )));
        }
    }
    if let Some(last) = steps.last() {
        if last.step_index >= truth.len() {
            return Err(Error::Analysis("truth is shorter than the run".into()));
        }
    }

    let traces: Vec<Vec<f64>> = (0..n_params)
        .map(|j| {
            steps
                .iter()
                .map(|s| (s.state.parameters()[j] - true_params[j]) / true_params[j])
                .collect()
        })
        .collect();
    let tail = steps.len() - window_steps;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / v.len() as f64).sqrt()
    };

    let mut param_mean = Vec::with_capacity(n_params);
    let mut param_std = Vec::with_capacity(n_params);
    let mut param_final = Vec::with_capacity(n_params);
    let mut conv_time = Vec::with_capacity(n_params);
    for (j, trace) in traces.iter().enumerate() {
        let window_errors = &trace[tail..];
        let abs: Vec<f64> = window_errors.iter().map(|e| e.abs()).collect();
        param_mean.push(if abs.is_empty() { f64::NAN } else { mean(&abs) });
        param_std.push(if abs.is_empty() {
            f64::NAN
        } else {
            std(window_errors)
        });
        let estimates: Vec<f64> = steps[tail..]
            .iter()
            .map(|s| s.state.parameters()[j])
            .collect();
        param_final.push(if estimates.is_empty() {
            f64::NAN
        } else {
            mean(&estimates)
        });
        let last_bad = trace
            .iter()
            .rposition(|e| !(e.abs() < thresholds.mean_rel_error));
        conv_time.push(match last_bad {
            None => steps.first().map(|s| s.time),
            Some(i) if i + 1 < steps.len() => Some(steps[i + 1].time),
            Some(_) => None,
        });
    }

    let n = truth.n_dof();
    let mut input_sq = vec![0.0; n];
    let mut state_sq = vec![0.0; 2 * n];
    for s in &steps[tail..] {
        let k = s.step_index;
        for i in 0..n {
            input_sq[i] += (s.input_estimate.values()[i] - truth.inputs[k][i]).powi(2);
        }
        let est = s.state.as_vector();
        for i in 0..2 * n {
            state_sq[i] += (est[i] - truth.states[k][i]).powi(2);
        }
    }
    let rms = |sq: Vec<f64>| -> Vec<f64> {
        sq.into_iter()
            .map(|v| (v / window_steps as f64).sqrt())
            .collect()
    };

    let converged = !report.diverged
        && !steps.is_empty()
        && param_mean.iter().all(|m| *m < thresholds.mean_rel_error)
        && param_std.iter().all(|s| *s < thresholds.std_rel_error);

    Ok(Metrics {
        param_rel_error_traces: traces,
        param_mean_rel_error: param_mean,
        param_std_rel_error: param_std,
        param_final_estimate: param_final,
        input_rmse: rms(input_sq),
        state_rmse: rms(state_sq),
        convergence_time: conv_time,
        converged,
        diverged: report.diverged,
        steps_completed: steps.len(),
        window_steps,
    })
}
