//! Standard unscented Kalman filter for joint parameter/state estimation.
//!
//! The augmented state `z = [x | ẋ | θ]` is propagated through a
//! [`SystemModel`] with `2L + 1` sigma points. Sigma points are laid out as
//! `[z, z + √((L+λ)P)ᵢ (i = 1..L), z − √((L+λ)P)ᵢ (i = 1..L)]`, and the matrix
//! square root is the lower Cholesky factor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::models::SystemModel;

/// Sigma-point scaling constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnscentedParams {
    /// Spread of the sigma points around the mean, in `[1e-4, 1]`.
    pub alpha: f64,
    /// Prior-distribution constant; 2 is optimal for Gaussian priors.
    pub beta: f64,
    /// Secondary scaling, usually `0` or `3 − L`.
    pub kappa: f64,
}

impl Default for UnscentedParams {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UnscentedParams {
    pub fn validate(&self) -> Result<()> {
        if !(1e-4..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha = {} outside [1e-4, 1]",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || !self.kappa.is_finite() {
            return Err(Error::Config("beta and kappa must be finite".into()));
        }
        Ok(())
    }

    /// `λ = α²(L + κ) − L`.
    pub fn lambda(&self, l: usize) -> f64 {
        let l = l as f64;
        self.alpha * self.alpha * (l + self.kappa) - l
    }
}

/// Everything the filter needs besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub unscented: UnscentedParams,
    /// Discrete process noise covariance `Q` (L×L).
    pub process_cov: DMatrix<f64>,
    /// Discrete measurement noise covariance `R` (m×m).
    pub measurement_cov: DMatrix<f64>,
    /// Sampling period in seconds.
    pub dt: f64,
}

impl FilterConfig {
    pub fn new(process_cov: DMatrix<f64>, measurement_cov: DMatrix<f64>, dt: f64) -> Self {
        Self {
            unscented: UnscentedParams::default(),
            process_cov,
            measurement_cov,
            dt,
        }
    }

    /// `Q = q·I_L`, `R = r·I_m`.
    pub fn isotropic(l: usize, q: f64, m: usize, r: f64, dt: f64) -> Self {
        Self::new(DMatrix::identity(l, l) * q, DMatrix::identity(m, m) * r, dt)
    }

    pub fn with_unscented(mut self, unscented: UnscentedParams) -> Self {
        self.unscented = unscented;
        self
    }

    /// Checks the configuration against a state of length `l` and a
    /// measurement of length `m`.
    pub fn validate(&self, l: usize, m: usize) -> Result<()> {
        self.unscented.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        check_square("process covariance", &self.process_cov, l)?;
        check_square("measurement covariance", &self.measurement_cov, m)?;
        for (name, mat) in [("Q", &self.process_cov), ("R", &self.measurement_cov)] {
            if !is_symmetric(mat, 1e-12) {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            if min_eigenvalue(mat) < -1e-12 * mat.trace().abs().max(1e-300) {
                return Err(Error::Config(format!(
                    "{name} is not positive semi-definite"
                )));
            }
        }
        if self.measurement_cov.clone().cholesky().is_none() {
            return Err(Error::Config("R must be positive definite".into()));
        }
        Ok(())
    }
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    check_dim(name, n, m.nrows())?;
    check_dim(name, n, m.ncols())
}

/// Converts a continuous-time noise intensity to its discrete counterpart by
/// dividing by the sampling period.
pub fn discretize_covariance(continuous: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    continuous / dt
}

/// Partition of the augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_dof: usize,
    pub n_params: usize,
}

impl StateLayout {
    pub fn of<M: SystemModel + ?Sized>(model: &M) -> Self {
        Self {
            n_dof: model.n_dof(),
            n_params: model.n_params(),
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n_dof + self.n_params
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Joint vector of displacements, velocities and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    values: DVector<f64>,
    layout: StateLayout,
}

impl AugmentedState {
    pub fn new(values: DVector<f64>, layout: StateLayout) -> Result<Self> {
        check_dim("augmented state", layout.len(), values.len())?;
        Ok(Self { values, layout })
    }

    pub fn from_parts(x: &[f64], v: &[f64], theta: &[f64]) -> Result<Self> {
        check_dim("velocity block", x.len(), v.len())?;
        let layout = StateLayout {
            n_dof: x.len(),
            n_params: theta.len(),
        };
        let values = DVector::from_iterator(layout.len(), x.iter().chain(v).chain(theta).copied());
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn displacements(&self) -> &[f64] {
        &self.values.as_slice()[..self.layout.n_dof]
    }

    pub fn velocities(&self) -> &[f64] {
        &self.values.as_slice()[self.layout.n_dof..2 * self.layout.n_dof]
    }

    pub fn parameters(&self) -> &[f64] {
        &self.values.as_slice()[2 * self.layout.n_dof..]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    fn with_values(&self, values: DVector<f64>) -> Self {
        Self {
            values,
            layout: self.layout,
        }
    }
}

/// Square state covariance, kept symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance(DMatrix<f64>);

impl Covariance {
    /// Wraps a square matrix, symmetrizing it.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_dim("covariance", matrix.nrows(), matrix.ncols())?;
        let mut c = Self(matrix);
        c.symmetrize();
        Ok(c)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn symmetrize(&mut self) {
        let t = self.0.transpose();
        self.0 += t;
        self.0 *= 0.5;
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    /// Symmetric with min eigenvalue ≥ −1e-10·trace.
    pub fn is_healthy(&self) -> bool {
        is_symmetric(&self.0, 0.0) && self.min_eigenvalue() >= -1e-10 * self.trace().abs()
    }
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Mean and covariance weights of the `2L + 1` sigma points.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub mean: DVector<f64>,
    pub cov: DVector<f64>,
    pub lambda: f64,
}

impl WeightSet {
    pub fn state_len(&self) -> usize {
        (self.mean.len() - 1) / 2
    }
}

pub fn compute_weights(l: usize, params: &UnscentedParams) -> Result<WeightSet> {
    if l == 0 {
        return Err(Error::Config("state dimension must be at least 1".into()));
    }
    params.validate()?;
    let lambda = params.lambda(l);
    let scale = l as f64 + lambda;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!(
            "L + lambda = {scale} must be positive (alpha = {}, kappa = {})",
            params.alpha, params.kappa
        )));
    }
    let wi = 1.0 / (2.0 * scale);
    let mut mean = DVector::from_element(2 * l + 1, wi);
    let mut cov = mean.clone();
    mean[0] = lambda / scale;
    cov[0] = lambda / scale + (1.0 - params.alpha * params.alpha + params.beta);
    Ok(WeightSet { mean, cov, lambda })
}

/// The `2L + 1` sigma points, center first.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weighted_mean(&self, weights: &DVector<f64>) -> DVector<f64> {
        weighted_mean(&self.points, weights)
    }

    pub fn weighted_scatter(&self, mean: &DVector<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
        weighted_cross(&self.points, mean, &self.points, mean, weights)
    }
}

// Accumulated relative to the center point: the weights sum to one, and a
// large negative center weight would otherwise leave round-off in the mean
// even when every point coincides.
fn weighted_mean(points: &[DVector<f64>], weights: &DVector<f64>) -> DVector<f64> {
    let center = &points[0];
    let mut offset = DVector::zeros(center.len());
    for (p, &w) in points.iter().zip(weights.iter()).skip(1) {
        offset.axpy(w, &(p - center), 1.0);
    }
    offset + center
}

fn weighted_cross(
    a: &[DVector<f64>],
    a_mean: &DVector<f64>,
    b: &[DVector<f64>],
    b_mean: &DVector<f64>,
    weights: &DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a_mean.len(), b_mean.len());
    for ((pa, pb), &w) in a.iter().zip(b).zip(weights.iter()) {
        let da = pa - a_mean;
        let db = pb - b_mean;
        out.ger(w, &da, &db, 1.0);
    }
    out
}

const JITTER_START: f64 = 1e-12;
const JITTER_LIMIT: f64 = 1e-6;

/// Lower Cholesky factor of `scale·P`, with diagonal jitter escalation.
fn scaled_square_root(p: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if p.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(chol) = (p * scale).cholesky() {
        return Ok(chol.l());
    }
    let trace = p.trace();
    if trace > 0.0 && trace.is_finite() {
        let base = trace / n as f64;
        let mut factor = JITTER_START;
        while factor <= JITTER_LIMIT * (1.0 + 1e-9) {
            let mut jittered = p.clone();
            for i in 0..n {
                jittered[(i, i)] += factor * base;
            }
            if let Some(chol) = (jittered * scale).cholesky() {
                return Ok(chol.l());
            }
            factor *= 10.0;
        }
    }
    Err(Error::SquareRoot {
        min_eigenvalue: min_eigenvalue(p),
    })
}

pub fn generate_sigma_points(
    z: &AugmentedState,
    p: &Covariance,
    params: &UnscentedParams,
) -> Result<SigmaSet> {
    let l = z.len();
    check_dim("covariance", l, p.dim())?;
    let scale = l as f64 + params.lambda(l);
    if !(scale > 0.0) {
        return Err(Error::Config(format!(
            "L + lambda = {scale} must be positive"
        )));
    }
    let root = scaled_square_root(p.matrix(), scale)?;
    let center = z.as_vector();
    let mut points = Vec::with_capacity(2 * l + 1);
    points.push(center.clone());
    for i in 0..l {
        points.push(center + root.column(i));
    }
    for i in 0..l {
        points.push(center - root.column(i));
    }
    Ok(SigmaSet { points })
}

/// Output of the prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub state: AugmentedState,
    pub covariance: Covariance,
    pub propagated: SigmaSet,
}

pub fn predict<M: SystemModel + ?Sized>(
    sigma: &SigmaSet,
    weights: &WeightSet,
    model: &M,
    u_prev: &DVector<f64>,
    config: &FilterConfig,
    step: usize,
) -> Result<Prediction> {
    let l = model.state_len();
    check_dim("sigma point", l, sigma.points[0].len())?;
    check_dim("input", model.n_dof(), u_prev.len())?;
    let layout = StateLayout::of(model);
    let propagated: Vec<DVector<f64>> = sigma
        .points
        .iter()
        .map(|p| model.transition(p, u_prev, config.dt))
        .collect();
    if propagated.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Divergence {
            step,
            reason: "non-finite sigma point after propagation".into(),
        });
    }
    let mean = weighted_mean(&propagated, &weights.mean);
    let mut cov = weighted_cross(&propagated, &mean, &propagated, &mean, &weights.cov);
    cov += &config.process_cov;
    let mut covariance = Covariance(cov);
    covariance.symmetrize();
    Ok(Prediction {
        state: AugmentedState::new(mean, layout)?,
        covariance,
        propagated: SigmaSet { points: propagated },
    })
}

/// Measurement update of a prediction. Returns the corrected mean and a
/// symmetrized covariance.
pub fn update<M: SystemModel + ?Sized>(
    prediction: &Prediction,
    weights: &WeightSet,
    y_meas: &DVector<f64>,
    model: &M,
    u_now: &DVector<f64>,
    config: &FilterConfig,
    step: usize,
) -> Result<(AugmentedState, Covariance)> {
    let m = model.observation_dim();
    check_dim("measurement", m, y_meas.len())?;
    check_dim("input", model.n_dof(), u_now.len())?;
    let z_p = prediction.state.as_vector();
    let images: Vec<DVector<f64>> = prediction
        .propagated
        .points
        .iter()
        .map(|p| model.observe(p, u_now))
        .collect();
    let y_mean = weighted_mean(&images, &weights.mean);
    let mut p_m = weighted_cross(&images, &y_mean, &images, &y_mean, &weights.cov);
    p_m += &config.measurement_cov;
    let p_s = weighted_cross(
        &prediction.propagated.points,
        z_p,
        &images,
        &y_mean,
        &weights.cov,
    );

    // Gain K = P_s P_m⁻¹, obtained as Kᵀ = P_m⁻¹ P_sᵀ.
    let p_s_t = p_s.transpose();
    let gain_t = match p_m.clone().cholesky() {
        Some(chol) => chol.solve(&p_s_t),
        None => p_m
            .clone()
            .lu()
            .solve(&p_s_t)
            .ok_or(Error::SingularInnovation { step })?,
    };
    let gain = gain_t.transpose();
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            reason: "non-finite Kalman gain".into(),
        });
    }
    let innovation = y_meas - &y_mean;
    let z = z_p + &gain * innovation;
    let mut p = prediction.covariance.matrix() - &p_s * gain.transpose();
    let t = p.transpose();
    p += t;
    p *= 0.5;
    if z.iter().chain(p.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            reason: "non-finite state after update".into(),
        });
    }
    Ok((prediction.state.with_values(z), Covariance(p)))
}

/// Stateful standard UKF with known inputs.
#[derive(Debug, Clone)]
pub struct Ukf<M> {
    model: M,
    config: FilterConfig,
    weights: WeightSet,
    state: AugmentedState,
    covariance: Covariance,
    step: usize,
}

impl<M: SystemModel> Ukf<M> {
    pub fn new(model: M, config: FilterConfig, z0: AugmentedState, p0: Covariance) -> Result<Self> {
        let l = model.state_len();
        config.validate(l, model.observation_dim())?;
        check_dim("initial state", l, z0.len())?;
        check_dim("initial covariance", l, p0.dim())?;
        let weights = compute_weights(l, &config.unscented)?;
        Ok(Self {
            model,
            config,
            weights,
            state: z0,
            covariance: p0,
            step: 0,
        })
    }

    pub fn state(&self) -> &AugmentedState {
        &self.state
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Advances one sample: predicts with the previous input, then corrects
    /// with `y` observed under the current input.
    pub fn step(
        &mut self,
        y: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_now: &DVector<f64>,
    ) -> Result<()> {
        let step = self.step + 1;
        let sigma = generate_sigma_points(&self.state, &self.covariance, &self.config.unscented)?;
        let prediction = predict(
            &sigma,
            &self.weights,
            &self.model,
            u_prev,
            &self.config,
            step,
        )?;
        let (z, p) = update(
            &prediction,
            &self.weights,
            y,
            &self.model,
            u_now,
            &self.config,
            step,
        )?;
        self.state = z;
        self.covariance = p;
        self.step = step;
        Ok(())
    }
}
