//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use ipsukf::analysis::ConvergenceThresholds;
use ipsukf::models::{ChainModel, ParamSlot};
use ipsukf::simulator::sample_count;
use ipsukf::{
    build_duffing_chain, build_linear_chain, ChainParams, DuffingChainSpec, ExcitationSpec,
    LinearChainSpec, ObservationLayout, SystemModel, UnscentedParams,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearChain,
    DuffingChain,
}

/// Which filter processes the measurements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Two-stage filter that reconstructs the unknown input.
    #[default]
    IpsUkf,
    /// Plain joint UKF fed with the true input.
    Ukf,
}

/// True physical system and which coefficients the filter must identify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub masses: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cubic: Vec<f64>,
    /// Coefficients treated as known, by name (`c1`, `k2`, `e1`, …).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub known_parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise std as a fraction of each channel's RMS.
    pub rms_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub kappa: f64,
    /// Diagonal of Q, one entry per augmented-state component.
    pub q_diag: Vec<f64>,
    /// Diagonal of R, one entry per measurement channel.
    pub r_diag: Vec<f64>,
    /// Sampling period (s).
    pub dt: f64,
    /// Record length (s).
    pub duration: f64,
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
}

fn default_alpha() -> f64 {
    UnscentedParams::default().alpha
}

fn default_beta() -> f64 {
    UnscentedParams::default().beta
}

fn default_guard() -> f64 {
    ipsukf::input::DEFAULT_DIVERGENCE_GUARD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Initial parameter guesses as a fraction of the true values. Ignored
    /// when `param_guess` is given.
    #[serde(default = "default_guess_ratio")]
    pub param_guess_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_guess: Option<Vec<f64>>,
    /// Initial variance of every displacement and velocity.
    #[serde(default = "default_p0_state")]
    pub p0_state: f64,
    /// Initial variance of every parameter.
    #[serde(default = "default_p0_param")]
    pub p0_param: f64,
}

fn default_guess_ratio() -> f64 {
    0.5
}

fn default_p0_state() -> f64 {
    1e-2
}

fn default_p0_param() -> f64 {
    1.0
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            param_guess_ratio: default_guess_ratio(),
            param_guess: None,
            p0_state: default_p0_state(),
            p0_param: default_p0_param(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// DOFs (1-based) whose force is unknown; all others are known.
    pub unknown_dofs: Vec<usize>,
    /// Known force on every DOF (entries at unknown DOFs are ignored).
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Trailing window (s); defaults to the last 10 % of the record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_mean_threshold")]
    pub mean_rel_error: f64,
    #[serde(default = "default_std_threshold")]
    pub std_rel_error: f64,
}

fn default_mean_threshold() -> f64 {
    ConvergenceThresholds::default().mean_rel_error
}

fn default_std_threshold() -> f64 {
    ConvergenceThresholds::default().std_rel_error
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: None,
            mean_rel_error: default_mean_threshold(),
            std_rel_error: default_std_threshold(),
        }
    }
}

/// One experiment: truth generation, measurement synthesis, filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub excitation: ExcitationSpec,
    pub inputs: InputConfig,
    pub layout: ObservationLayout,
    pub noise: NoiseConfig,
    pub filter: FilterSettings,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text)
            .map_err(|e| CliError::Config(ConfigError::new("<root>", e.to_string())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    /// Same experiment restricted to one seed.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c
    }

    pub fn n_dof(&self) -> usize {
        self.model.masses.len()
    }

    pub fn true_params(&self) -> ChainParams {
        ChainParams {
            masses: self.model.masses.clone(),
            damping: self.model.damping.clone(),
            stiffness: self.model.stiffness.clone(),
            cubic: self.model.cubic.clone(),
        }
    }

    pub fn known_input_mask(&self) -> Vec<bool> {
        (1..=self.n_dof())
            .map(|dof| !self.inputs.unknown_dofs.contains(&dof))
            .collect()
    }

    pub fn known_input_values(&self) -> Vec<f64> {
        self.inputs
            .known_values
            .clone()
            .unwrap_or_else(|| vec![0.0; self.n_dof()])
    }

    pub fn sample_count(&self) -> usize {
        sample_count(self.filter.dt, self.filter.duration).unwrap_or(0)
    }

    pub fn metrics_window(&self) -> f64 {
        self.metrics.window.unwrap_or(0.1 * self.filter.duration)
    }

    pub fn thresholds(&self) -> ConvergenceThresholds {
        ConvergenceThresholds {
            mean_rel_error: self.metrics.mean_rel_error,
            std_rel_error: self.metrics.std_rel_error,
        }
    }

    pub fn unscented(&self) -> UnscentedParams {
        UnscentedParams {
            alpha: self.filter.alpha,
            beta: self.filter.beta,
            kappa: self.filter.kappa,
        }
    }

    /// Filter model built from the config (unvalidated fields are checked by
    /// [`validate`](Self::validate)).
    pub fn build_model(&self) -> Result<ChainModel, ConfigError> {
        let n = self.n_dof();
        let known = |prefix: &str, i: usize| {
            self.model
                .known_parameters
                .iter()
                .any(|name| *name == format!("{prefix}{}", i + 1))
        };
        let unknown = |prefix: &str| (0..n).map(|i| !known(prefix, i)).collect::<Vec<_>>();
        let built = match self.model.kind {
            ModelKind::LinearChain => {
                let spec = LinearChainSpec {
                    masses: self.model.masses.clone(),
                    damping: self.model.damping.clone(),
                    stiffness: self.model.stiffness.clone(),
                    unknown_damping: unknown("c"),
                    unknown_stiffness: unknown("k"),
                };
                build_linear_chain(&spec, self.layout)
            }
            ModelKind::DuffingChain => {
                let spec = DuffingChainSpec {
                    masses: self.model.masses.clone(),
                    damping: self.model.damping.clone(),
                    stiffness: self.model.stiffness.clone(),
                    cubic: self.model.cubic.clone(),
                    unknown_damping: unknown("c"),
                    unknown_stiffness: unknown("k"),
                    unknown_cubic: unknown("e"),
                };
                build_duffing_chain(&spec, self.layout)
            }
        };
        built.map_err(|e| ConfigError::new("model", e.to_string()))
    }

    /// Checks every field before any computation. Errors carry the path of
    /// the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: &str, msg: String| Err(ConfigError::new(path, msg));
        if self.seeds.is_empty() {
            return err("seeds", "at least one seed is required".into());
        }
        let n = self.n_dof();
        if n == 0 {
            return err("model.masses", "at least one DOF is required".into());
        }
        match self.model.kind {
            ModelKind::LinearChain if !self.model.cubic.is_empty() => {
                return err(
                    "model.cubic",
                    "a linear chain has no cubic coefficients".into(),
                )
            }
            ModelKind::DuffingChain if self.model.cubic.len() != n => {
                return err("model.cubic", format!("expected {n} coefficients"))
            }
            _ => {}
        }
        for (path, v) in [
            ("model.damping", &self.model.damping),
            ("model.stiffness", &self.model.stiffness),
        ] {
            if v.len() != n {
                return err(path, format!("expected {n} coefficients, got {}", v.len()));
            }
        }
        let valid_names: Vec<String> = ["c", "k", "e"]
            .iter()
            .filter(|p| **p != "e" || self.model.kind == ModelKind::DuffingChain)
            .flat_map(|p| (1..=n).map(move |i| format!("{p}{i}")))
            .collect();
        for name in &self.model.known_parameters {
            if !valid_names.contains(name) {
                return err(
                    "model.known_parameters",
                    format!("unknown parameter name {name:?}"),
                );
            }
        }
        let model = self.build_model()?;

        self.excitation
            .validate(n)
            .map_err(|e| ConfigError::new("excitation", e.to_string()))?;
        if let Some(dof) = self
            .inputs
            .unknown_dofs
            .iter()
            .find(|d| **d == 0 || **d > n)
        {
            return err("inputs.unknown_dofs", format!("DOF {dof} outside 1..={n}"));
        }
        if let Some(v) = &self.inputs.known_values {
            if v.len() != n {
                return err("inputs.known_values", format!("expected {n} values"));
            }
        }
        self.layout
            .validate()
            .map_err(|e| ConfigError::new("layout", e.to_string()))?;
        if !(self.noise.rms_ratio >= 0.0 && self.noise.rms_ratio.is_finite()) {
            return err("noise.rms_ratio", "must be non-negative".into());
        }

        let f = &self.filter;
        self.unscented()
            .validate()
            .map_err(|e| ConfigError::new("filter.alpha", e.to_string()))?;
        if !(f.dt > 0.0) {
            return err("filter.dt", "must be positive".into());
        }
        sample_count(f.dt, f.duration)
            .map_err(|e| ConfigError::new("filter.duration", e.to_string()))?;
        let l = model.state_len();
        let m = model.observation_dim();
        if f.q_diag.len() != l {
            return err(
                "filter.q_diag",
                format!(
                    "expected {l} entries (state length), got {}",
                    f.q_diag.len()
                ),
            );
        }
        if f.r_diag.len() != m {
            return err(
                "filter.r_diag",
                format!(
                    "expected {m} entries (measurement length), got {}",
                    f.r_diag.len()
                ),
            );
        }
        if f.q_diag.iter().any(|q| !(*q >= 0.0)) {
            return err("filter.q_diag", "entries must be non-negative".into());
        }
        if f.r_diag.iter().any(|r| !(*r > 0.0)) {
            return err("filter.r_diag", "entries must be positive".into());
        }
        if !(f.divergence_guard > 0.0) {
            return err("filter.divergence_guard", "must be positive".into());
        }

        let init = &self.init;
        if let Some(guess) = &init.param_guess {
            if guess.len() != model.n_params() {
                return err(
                    "init.param_guess",
                    format!("expected {} values", model.n_params()),
                );
            }
        } else if !init.param_guess_ratio.is_finite() {
            return err("init.param_guess_ratio", "must be finite".into());
        }
        if !(init.p0_state >= 0.0) {
            return err("init.p0_state", "must be non-negative".into());
        }
        if !(init.p0_param >= 0.0) {
            return err("init.p0_param", "must be non-negative".into());
        }
        if let Some(w) = self.metrics.window {
            if !(w > 0.0 && w <= f.duration) {
                return err("metrics.window", "must lie in (0, duration]".into());
            }
        }
        Ok(())
    }

    pub fn parameter_slots(&self) -> Vec<ParamSlot> {
        self.build_model()
            .map(|m| m.slots().to_vec())
            .unwrap_or_default()
    }
}
