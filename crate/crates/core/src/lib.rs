//! Unscented Kalman filtering for structural systems with unknown inputs.
//!
//! The crate provides a standard joint parameter/state UKF ([`filter`]), the
//! two-stage input–parameter–state variant built on it ([`input`]), shear-chain
//! models with optional cubic springs ([`models`]), an RK4 truth generator
//! with synthetic sensor noise ([`simulator`]), and identifiability/metric
//! helpers ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod filter;
pub mod input;
pub mod models;
pub mod simulator;

pub use error::{Error, Result};
pub use filter::{
    compute_weights, generate_sigma_points, AugmentedState, Covariance, FilterConfig, SigmaSet,
    StateLayout, Ukf, UnscentedParams, WeightSet,
};
pub use input::{
    apply_known_mask, estimate_input, FilterState, InputFrame, IpsUkf, RunReport, StepResult,
};
pub use models::{
    build_duffing_chain, build_linear_chain, ChainModel, ChainParams, DuffingChainSpec,
    LinearChainSpec, ObservationLayout, SystemModel,
};
pub use simulator::{ExcitationSpec, NoiseSpec, Trajectory};
