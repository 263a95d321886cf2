//! Structural system models.
//!
//! Every model here is an `n`-story shear chain: DOF `i` is tied to DOF
//! `i - 1` (or to the ground for `i = 0`) by a spring/damper pair and an
//! optional cubic spring. The linear chain and the Duffing chain are two
//! configurations of the same [`ChainModel`].
//!
//! The filter sees a model through [`SystemModel`], which bundles the
//! explicit-Euler transition `F`, the observation `h`, and the input recovery
//! `G` (the equation of motion solved for the force).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Contract between a structural model and the filters.
///
/// The augmented state is ordered `[x | ẋ | θ]` with `n_dof` displacements,
/// `n_dof` velocities and `n_params` unknown parameters.
pub trait SystemModel: Send + Sync {
    fn n_dof(&self) -> usize;

    fn n_params(&self) -> usize;

    fn state_len(&self) -> usize {
        2 * self.n_dof() + self.n_params()
    }

    fn observation_layout(&self) -> ObservationLayout;

    fn observation_dim(&self) -> usize {
        self.observation_layout().dimension(self.n_dof())
    }

    /// Diagonal of the (always known) mass matrix.
    fn masses(&self) -> &[f64];

    /// One explicit-Euler step of the equation of motion. Parameter components
    /// are copied through unchanged.
    fn transition(&self, z: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64>;

    /// Noise-free measurement vector `[x | ẋ | ẍ]` restricted to the layout.
    fn observe(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Force that explains the measured accelerations given the state and the
    /// parameters carried in `z`: `M ẍ + C ẋ + K x (+ E c(x))`.
    fn recover_input(&self, accel: &DVector<f64>, z: &DVector<f64>) -> DVector<f64>;

    /// Column names for the parameter block of the state, e.g. `c1`, `k3`.
    fn parameter_names(&self) -> Vec<String>;
}

/// Which measurement channel groups are stacked into `y`, always in the
/// order displacements, velocities, accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub displacements: bool,
    pub velocities: bool,
    pub accelerations: bool,
}

impl ObservationLayout {
    pub const FULL: Self = Self {
        displacements: true,
        velocities: true,
        accelerations: true,
    };
    pub const NO_DISPLACEMENT: Self = Self {
        displacements: false,
        velocities: true,
        accelerations: true,
    };
    pub const NO_VELOCITY: Self = Self {
        displacements: true,
        velocities: false,
        accelerations: true,
    };
    pub const ACCELERATION_ONLY: Self = Self {
        displacements: false,
        velocities: false,
        accelerations: true,
    };

    /// Input recovery needs measured accelerations, so a layout without them
    /// is rejected.
    pub fn new(displacements: bool, velocities: bool, accelerations: bool) -> Result<Self> {
        let layout = Self {
            displacements,
            velocities,
            accelerations,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.accelerations {
            return Err(Error::Config(
                "observation layout must include accelerations".into(),
            ));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.displacements as usize + self.velocities as usize + self.accelerations as usize
    }

    pub fn dimension(&self, n_dof: usize) -> usize {
        self.groups() * n_dof
    }

    /// Row offset of the acceleration block inside `y`.
    pub fn acceleration_offset(&self, n_dof: usize) -> usize {
        (self.displacements as usize + self.velocities as usize) * n_dof
    }

    /// Channel names in measurement order, e.g. `x1, v1, a1`.
    pub fn channel_names(&self, n_dof: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dimension(n_dof));
        for (on, prefix) in [
            (self.displacements, "x"),
            (self.velocities, "v"),
            (self.accelerations, "a"),
        ] {
            if on {
                names.extend((1..=n_dof).map(|i| format!("{prefix}{i}")));
            }
        }
        names
    }

    /// Stacks the included groups of `(x, ẋ, ẍ)`.
    pub fn stack(&self, x: &[f64], v: &[f64], a: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut y = Vec::with_capacity(self.dimension(n));
        if self.displacements {
            y.extend_from_slice(x);
        }
        if self.velocities {
            y.extend_from_slice(v);
        }
        if self.accelerations {
            y.extend_from_slice(a);
        }
        DVector::from_vec(y)
    }
}

impl Default for ObservationLayout {
    fn default() -> Self {
        Self::FULL
    }
}

/// Physical coefficients of a shear chain. `cubic` is empty for a linear
/// chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub masses: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cubic: Vec<f64>,
}

impl ChainParams {
    pub fn linear(masses: Vec<f64>, damping: Vec<f64>, stiffness: Vec<f64>) -> Result<Self> {
        let p = Self {
            masses,
            damping,
            stiffness,
            cubic: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn duffing(
        masses: Vec<f64>,
        damping: Vec<f64>,
        stiffness: Vec<f64>,
        cubic: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            masses,
            damping,
            stiffness,
            cubic,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 {
            return Err(Error::Model("chain needs at least one DOF".into()));
        }
        check_dim("damping coefficients", n, self.damping.len())?;
        check_dim("stiffness coefficients", n, self.stiffness.len())?;
        if !self.cubic.is_empty() {
            check_dim("cubic coefficients", n, self.cubic.len())?;
        }
        if let Some((i, m)) = self
            .masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::Model(format!(
                "mass m{} = {m} must be positive",
                i + 1
            )));
        }
        let all = self
            .damping
            .iter()
            .chain(&self.stiffness)
            .chain(&self.cubic);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Model("chain coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    pub fn is_nonlinear(&self) -> bool {
        !self.cubic.is_empty()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.masses))
    }

    pub fn damping_matrix(&self) -> DMatrix<f64> {
        chain_matrix(&self.damping)
    }

    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        chain_matrix(&self.stiffness)
    }

    /// Cubic coefficient matrix `E` acting on [`cubic_terms`].
    pub fn cubic_matrix(&self) -> DMatrix<f64> {
        let n = self.n_dof();
        let mut e = DMatrix::zeros(n, n);
        if self.cubic.is_empty() {
            return e;
        }
        for i in 0..n {
            e[(i, i)] = self.cubic[i];
            if i + 1 < n {
                e[(i, i + 1)] = -self.cubic[i + 1];
            }
        }
        e
    }

    /// Internal force `C ẋ + K x + E c(x)`.
    pub fn restoring_force(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let cubic = (!self.cubic.is_empty()).then_some(self.cubic.as_slice());
        chain_restoring_force(x, v, &self.damping, &self.stiffness, cubic)
    }

    /// `M⁻¹ (u − C ẋ − K x − E c(x))`.
    pub fn acceleration(&self, x: &[f64], v: &[f64], u: &[f64]) -> Vec<f64> {
        let r = self.restoring_force(x, v);
        (0..self.n_dof())
            .map(|i| (u[i] - r[i]) / self.masses[i])
            .collect()
    }
}

/// Tridiagonal chain assembly: `[[a1+a2, -a2, 0], [-a2, a2+a3, -a3], [0, -a3, a3]]`.
pub fn chain_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] += coeffs[i];
        if i + 1 < n {
            m[(i, i)] += coeffs[i + 1];
            m[(i, i + 1)] = -coeffs[i + 1];
            m[(i + 1, i)] = -coeffs[i + 1];
        }
    }
    m
}

/// `[x1³, (x2 − x1)³, …]`, the cubed inter-story drifts.
pub fn cubic_terms(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let d = if i == 0 { x[0] } else { x[i] - x[i - 1] };
            d * d * d
        })
        .collect()
}

fn chain_restoring_force(
    x: &[f64],
    v: &[f64],
    damping: &[f64],
    stiffness: &[f64],
    cubic: Option<&[f64]>,
) -> Vec<f64> {
    let n = x.len();
    // Element force of the spring/damper between DOF i-1 and DOF i.
    let element = |i: usize| {
        let (dx, dv) = if i == 0 {
            (x[0], v[0])
        } else {
            (x[i] - x[i - 1], v[i] - v[i - 1])
        };
        let mut f = damping[i] * dv + stiffness[i] * dx;
        if let Some(e) = cubic {
            f += e[i] * dx * dx * dx;
        }
        f
    };
    let forces: Vec<f64> = (0..n).map(element).collect();
    (0..n)
        .map(|i| {
            if i + 1 < n {
                forces[i] - forces[i + 1]
            } else {
                forces[i]
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Damping,
    Stiffness,
    Cubic,
}

/// One unknown coefficient carried in the augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub kind: ParamKind,
    /// Zero-based story index.
    pub index: usize,
}

impl fmt::Display for ParamSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            ParamKind::Damping => "c",
            ParamKind::Stiffness => "k",
            ParamKind::Cubic => "e",
        };
        write!(f, "{prefix}{}", self.index + 1)
    }
}

/// Linear shear chain with a per-coefficient unknown flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearChainSpec {
    pub masses: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub unknown_damping: Vec<bool>,
    pub unknown_stiffness: Vec<bool>,
}

impl LinearChainSpec {
    /// All damping and stiffness coefficients unknown.
    pub fn new(masses: Vec<f64>, damping: Vec<f64>, stiffness: Vec<f64>) -> Self {
        let n = masses.len();
        Self {
            masses,
            damping,
            stiffness,
            unknown_damping: vec![true; n],
            unknown_stiffness: vec![true; n],
        }
    }

    /// Every coefficient fixed at its nominal value (no augmentation).
    pub fn all_known(mut self) -> Self {
        self.unknown_damping.fill(false);
        self.unknown_stiffness.fill(false);
        self
    }
}

/// Shear chain with cubic springs on every story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuffingChainSpec {
    pub masses: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub cubic: Vec<f64>,
    pub unknown_damping: Vec<bool>,
    pub unknown_stiffness: Vec<bool>,
    pub unknown_cubic: Vec<bool>,
}

impl DuffingChainSpec {
    pub fn new(masses: Vec<f64>, damping: Vec<f64>, stiffness: Vec<f64>, cubic: Vec<f64>) -> Self {
        let n = masses.len();
        Self {
            masses,
            damping,
            stiffness,
            cubic,
            unknown_damping: vec![true; n],
            unknown_stiffness: vec![true; n],
            unknown_cubic: vec![true; n],
        }
    }
}

/// Shear chain model used by the filters.
///
/// Unknown coefficients are read from the parameter block of the state, in
/// the fixed order `[c… | k… | ε…]` (only the unknown ones); known
/// coefficients come from the nominal values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    nominal: ChainParams,
    slots: Vec<ParamSlot>,
    layout: ObservationLayout,
}

pub fn build_linear_chain(spec: &LinearChainSpec, layout: ObservationLayout) -> Result<ChainModel> {
    let nominal = ChainParams::linear(
        spec.masses.clone(),
        spec.damping.clone(),
        spec.stiffness.clone(),
    )?;
    let n = nominal.n_dof();
    check_dim("unknown damping flags", n, spec.unknown_damping.len())?;
    check_dim("unknown stiffness flags", n, spec.unknown_stiffness.len())?;
    let slots = collect_slots(&[
        (ParamKind::Damping, &spec.unknown_damping),
        (ParamKind::Stiffness, &spec.unknown_stiffness),
    ]);
    ChainModel::new(nominal, slots, layout)
}

pub fn build_duffing_chain(
    spec: &DuffingChainSpec,
    layout: ObservationLayout,
) -> Result<ChainModel> {
    let nominal = ChainParams::duffing(
        spec.masses.clone(),
        spec.damping.clone(),
        spec.stiffness.clone(),
        spec.cubic.clone(),
    )?;
    let n = nominal.n_dof();
    check_dim("unknown damping flags", n, spec.unknown_damping.len())?;
    check_dim("unknown stiffness flags", n, spec.unknown_stiffness.len())?;
    check_dim("unknown cubic flags", n, spec.unknown_cubic.len())?;
    let slots = collect_slots(&[
        (ParamKind::Damping, &spec.unknown_damping),
        (ParamKind::Stiffness, &spec.unknown_stiffness),
        (ParamKind::Cubic, &spec.unknown_cubic),
    ]);
    ChainModel::new(nominal, slots, layout)
}

fn collect_slots(groups: &[(ParamKind, &Vec<bool>)]) -> Vec<ParamSlot> {
    groups
        .iter()
        .flat_map(|(kind, flags)| {
            flags
                .iter()
                .enumerate()
                .filter(|(_, unknown)| **unknown)
                .map(|(index, _)| ParamSlot { kind: *kind, index })
        })
        .collect()
}

impl ChainModel {
    pub fn new(
        nominal: ChainParams,
        slots: Vec<ParamSlot>,
        layout: ObservationLayout,
    ) -> Result<Self> {
        nominal.validate()?;
        layout.validate()?;
        let n = nominal.n_dof();
        for slot in &slots {
            if slot.index >= n || (slot.kind == ParamKind::Cubic && !nominal.is_nonlinear()) {
                return Err(Error::Model(format!(
                    "parameter {slot} does not exist in this chain"
                )));
            }
        }
        Ok(Self {
            nominal,
            slots,
            layout,
        })
    }

    pub fn with_layout(mut self, layout: ObservationLayout) -> Result<Self> {
        layout.validate()?;
        self.layout = layout;
        Ok(self)
    }

    pub fn nominal(&self) -> &ChainParams {
        &self.nominal
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    /// Nominal coefficients with the unknown ones taken from `theta`.
    pub fn params_from(&self, theta: &[f64]) -> ChainParams {
        let mut p = self.nominal.clone();
        for (slot, &value) in self.slots.iter().zip(theta) {
            let target = match slot.kind {
                ParamKind::Damping => &mut p.damping,
                ParamKind::Stiffness => &mut p.stiffness,
                ParamKind::Cubic => &mut p.cubic,
            };
            target[slot.index] = value;
        }
        p
    }

    /// Parameter block built from a set of physical coefficients, in slot
    /// order.
    pub fn theta_of(&self, params: &ChainParams) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| match slot.kind {
                ParamKind::Damping => params.damping[slot.index],
                ParamKind::Stiffness => params.stiffness[slot.index],
                ParamKind::Cubic => params.cubic[slot.index],
            })
            .collect()
    }

    fn restoring(&self, z: &DVector<f64>) -> Vec<f64> {
        let n = self.nominal.n_dof();
        let s = z.as_slice();
        let (x, rest) = s.split_at(n);
        let (v, theta) = rest.split_at(n);
        if self.slots.is_empty() {
            return self.nominal.restoring_force(x, v);
        }
        self.params_from(theta).restoring_force(x, v)
    }

    /// Observation under an arbitrary layout (the model's own layout is
    /// ignored).
    pub fn observe_with(
        &self,
        z: &DVector<f64>,
        u: &DVector<f64>,
        layout: ObservationLayout,
    ) -> DVector<f64> {
        let n = self.nominal.n_dof();
        let r = self.restoring(z);
        let a: Vec<f64> = (0..n)
            .map(|i| (u[i] - r[i]) / self.nominal.masses[i])
            .collect();
        layout.stack(&z.as_slice()[..n], &z.as_slice()[n..2 * n], &a)
    }
}

impl SystemModel for ChainModel {
    fn n_dof(&self) -> usize {
        self.nominal.n_dof()
    }

    fn n_params(&self) -> usize {
        self.slots.len()
    }

    fn observation_layout(&self) -> ObservationLayout {
        self.layout
    }

    fn masses(&self) -> &[f64] {
        &self.nominal.masses
    }

    fn transition(&self, z: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
        let n = self.n_dof();
        let r = self.restoring(z);
        let mut next = z.clone();
        for i in 0..n {
            next[i] = z[i] + dt * z[n + i];
            next[n + i] = z[n + i] + dt * (u[i] - r[i]) / self.nominal.masses[i];
        }
        next
    }

    fn observe(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.observe_with(z, u, self.layout)
    }

    fn recover_input(&self, accel: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let r = self.restoring(z);
        DVector::from_iterator(
            self.n_dof(),
            (0..self.n_dof()).map(|i| self.nominal.masses[i] * accel[i] + r[i]),
        )
    }

    fn parameter_names(&self) -> Vec<String> {
        self.slots.iter().map(ToString::to_string).collect()
    }
}
