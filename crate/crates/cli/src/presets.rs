//! Built-in experiments on the three-story linear chain and the two-story
//! Duffing chain.

use ipsukf::{ExcitationSpec, ObservationLayout};

use crate::config::{
    Estimator, ExperimentConfig, FilterSettings, InitConfig, InputConfig, MetricsConfig,
    ModelConfig, ModelKind, NoiseConfig,
};
use crate::error::CliError;

pub const NAMES: [&str; 6] = [
    "linear3dof-pulse",
    "linear3dof-ambient",
    "duffing2dof",
    "duffing-no-disp",
    "duffing-no-vel",
    "duffing-accel-only",
];

const DT: f64 = 0.01;
const DURATION: f64 = 30.0;
const SEEDS: std::ops::Range<u64> = 1..11;

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    match name {
        "linear3dof-pulse" => Ok(linear(name, pulse(3))),
        "linear3dof-ambient" => Ok(linear(name, ambient(3))),
        "duffing2dof" => Ok(duffing(name, ObservationLayout::FULL)),
        "duffing-no-disp" => Ok(duffing(name, ObservationLayout::NO_DISPLACEMENT)),
        "duffing-no-vel" => Ok(duffing(name, ObservationLayout::NO_VELOCITY)),
        "duffing-accel-only" => Ok(duffing(name, ObservationLayout::ACCELERATION_ONLY)),
        other => Err(CliError::UnknownPreset(other.to_string())),
    }
}

/// 100 N held for one sample at t = 5 s.
fn pulse(dof: usize) -> ExcitationSpec {
    ExcitationSpec::Pulse {
        amplitude: 100.0,
        start: 5.0,
        duration: 0.01,
        dof,
    }
}

/// Gaussian white noise with mean 0 and variance 4.
fn ambient(dof: usize) -> ExcitationSpec {
    ExcitationSpec::WhiteNoise {
        mean: 0.0,
        variance: 4.0,
        dof,
        seed: 0,
    }
}

fn filter(l: usize, q: f64, m: usize, r: f64) -> FilterSettings {
    FilterSettings {
        estimator: Estimator::IpsUkf,
        alpha: 1e-2,
        beta: 2.0,
        kappa: 0.0,
        q_diag: vec![q; l],
        r_diag: vec![r; m],
        dt: DT,
        duration: DURATION,
        divergence_guard: ipsukf::input::DEFAULT_DIVERGENCE_GUARD,
    }
}

fn linear(name: &str, excitation: ExcitationSpec) -> ExperimentConfig {
    let layout = ObservationLayout::FULL;
    ExperimentConfig {
        name: name.to_string(),
        seeds: SEEDS.collect(),
        output_dir: None,
        model: ModelConfig {
            kind: ModelKind::LinearChain,
            masses: vec![1.0; 3],
            damping: vec![0.25, 0.5, 0.75],
            stiffness: vec![9.0, 11.0, 13.0],
            cubic: Vec::new(),
            known_parameters: Vec::new(),
        },
        excitation,
        inputs: InputConfig {
            unknown_dofs: vec![3],
            known_values: None,
        },
        layout,
        noise: NoiseConfig { rms_ratio: 0.05 },
        filter: filter(12, 1e-9, layout.dimension(3), 1e-3),
        init: InitConfig::default(),
        metrics: MetricsConfig {
            window: Some(3.0),
            ..MetricsConfig::default()
        },
    }
}

fn duffing(name: &str, layout: ObservationLayout) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seeds: SEEDS.collect(),
        output_dir: None,
        model: ModelConfig {
            kind: ModelKind::DuffingChain,
            masses: vec![1.0; 2],
            damping: vec![0.5, 0.5],
            stiffness: vec![3.0, 4.5],
            cubic: vec![15.0, 27.0],
            known_parameters: Vec::new(),
        },
        excitation: ExcitationSpec::Superposition {
            components: vec![pulse(2), ambient(2)],
        },
        inputs: InputConfig {
            unknown_dofs: vec![2],
            known_values: None,
        },
        layout,
        noise: NoiseConfig { rms_ratio: 0.05 },
        filter: filter(10, 1e-9, layout.dimension(2), 1e-5),
        init: InitConfig::default(),
        metrics: MetricsConfig {
            window: Some(3.0),
            ..MetricsConfig::default()
        },
    }
}
