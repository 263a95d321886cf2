//! Ground-truth generation: excitations, RK4 response, noisy measurements.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`. White-noise
//! excitations draw sample `k` from stream `k` of their generator so that any
//! sample can be evaluated on its own; measurement noise draws sequentially,
//! sample-major and channel-minor.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::models::{ChainParams, ObservationLayout};

/// External force applied to the chain. DOF indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExcitationSpec {
    Zero,
    /// Constant `amplitude` (N) on `t ∈ [start, start + duration)`.
    Pulse {
        amplitude: f64,
        start: f64,
        duration: f64,
        dof: usize,
    },
    /// One Gaussian draw per sample, held over the sample (zero-order hold).
    WhiteNoise {
        mean: f64,
        variance: f64,
        dof: usize,
        seed: u64,
    },
    Superposition {
        components: Vec<ExcitationSpec>,
    },
}

impl ExcitationSpec {
    pub fn validate(&self, n_dof: usize) -> Result<()> {
        let check_dof = |dof: usize| {
            if dof == 0 || dof > n_dof {
                Err(Error::Config(format!(
                    "excitation DOF {dof} outside 1..={n_dof}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Zero => Ok(()),
            Self::Pulse {
                amplitude,
                start,
                duration,
                dof,
            } => {
                check_dof(*dof)?;
                if !(*duration > 0.0) || !amplitude.is_finite() || !start.is_finite() {
                    return Err(Error::Config("pulse needs a positive duration".into()));
                }
                Ok(())
            }
            Self::WhiteNoise {
                mean,
                variance,
                dof,
                ..
            } => {
                check_dof(*dof)?;
                if !(*variance >= 0.0) || !mean.is_finite() {
                    return Err(Error::Config(
                        "white noise needs a non-negative variance".into(),
                    ));
                }
                Ok(())
            }
            Self::Superposition { components } => {
                components.iter().try_for_each(|c| c.validate(n_dof))
            }
        }
    }

    /// Copy with every white-noise seed offset by `offset`.
    pub fn reseeded(&self, offset: u64) -> Self {
        match self {
            Self::WhiteNoise {
                mean,
                variance,
                dof,
                seed,
            } => Self::WhiteNoise {
                mean: *mean,
                variance: *variance,
                dof: *dof,
                seed: seed.wrapping_add(offset),
            },
            Self::Superposition { components } => Self::Superposition {
                components: components.iter().map(|c| c.reseeded(offset)).collect(),
            },
            other => other.clone(),
        }
    }
}

fn sample_index(t: f64, dt: f64) -> u64 {
    (t / dt + 1e-9).floor().max(0.0) as u64
}

fn add_sample(spec: &ExcitationSpec, t: f64, dt: f64, out: &mut DVector<f64>) {
    match spec {
        ExcitationSpec::Zero => {}
        ExcitationSpec::Pulse {
            amplitude,
            start,
            duration,
            dof,
        } => {
            let tol = 1e-9 * dt;
            if t >= start - tol && t < start + duration - tol {
                out[dof - 1] += amplitude;
            }
        }
        ExcitationSpec::WhiteNoise {
            mean,
            variance,
            dof,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(sample_index(t, dt));
            let draw: f64 = rng.sample(StandardNormal);
            out[dof - 1] += mean + variance.sqrt() * draw;
        }
        ExcitationSpec::Superposition { components } => {
            for c in components {
                add_sample(c, t, dt, out);
            }
        }
    }
}

/// Input vector at time `t` on a grid of spacing `dt`.
pub fn excitation_sample(spec: &ExcitationSpec, n_dof: usize, t: f64, dt: f64) -> DVector<f64> {
    let mut out = DVector::zeros(n_dof);
    add_sample(spec, t, dt, &mut out);
    out
}

/// Sampled response of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// `[x | ẋ]` at each sample.
    pub states: Vec<DVector<f64>>,
    pub accelerations: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_dof(&self) -> usize {
        self.states.first().map_or(0, |s| s.len() / 2)
    }

    pub fn displacement(&self, k: usize) -> &[f64] {
        &self.states[k].as_slice()[..self.n_dof()]
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.states[k].as_slice()[self.n_dof()..]
    }

    /// Noise-free measurement vectors under `layout`.
    pub fn clean_measurements(&self, layout: ObservationLayout) -> Vec<DVector<f64>> {
        (0..self.len())
            .map(|k| {
                layout.stack(
                    self.displacement(k),
                    self.velocity(k),
                    self.accelerations[k].as_slice(),
                )
            })
            .collect()
    }
}

/// One classical RK4 step of an autonomous first-order system.
pub fn rk4_step<F>(f: F, y: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (dt / 2.0)));
    let k3 = f(&(y + &k2 * (dt / 2.0)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// First-order form `[ẋ, M⁻¹(u − C ẋ − K x − E c(x))]` of a chain.
pub fn chain_derivative(params: &ChainParams, s: &DVector<f64>, u: &[f64]) -> DVector<f64> {
    let n = params.n_dof();
    let (x, v) = s.as_slice().split_at(n);
    let a = params.acceleration(x, v, u);
    DVector::from_iterator(2 * n, v.iter().copied().chain(a))
}

/// Number of samples in a record of length `duration`, which must be a
/// multiple of `dt`.
pub fn sample_count(dt: f64, duration: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Config("dt and duration must be positive".into()));
    }
    let n = (duration / dt).round();
    if (n * dt - duration).abs() > 1e-9 * duration {
        return Err(Error::Config(format!(
            "duration {duration} is not a multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Integrates the chain with RK4 and a zero-order-hold input. Produces
/// `duration / dt` samples at `t = k·dt`; the input at sample `k` acts over
/// `[t_k, t_k + dt)`.
pub fn rk4_simulate(
    params: &ChainParams,
    excitation: &ExcitationSpec,
    x0: &[f64],
    v0: &[f64],
    dt: f64,
    duration: f64,
) -> Result<Trajectory> {
    params.validate()?;
    let n = params.n_dof();
    check_dim("initial displacement", n, x0.len())?;
    check_dim("initial velocity", n, v0.len())?;
    excitation.validate(n)?;
    let count = sample_count(dt, duration)?;

    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(count),
        states: Vec::with_capacity(count),
        accelerations: Vec::with_capacity(count),
        inputs: Vec::with_capacity(count),
    };
    let mut s = DVector::from_iterator(2 * n, x0.iter().chain(v0).copied());
    for k in 0..count {
        let t = k as f64 * dt;
        let u = excitation_sample(excitation, n, t, dt);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationBlowUp { sample: k, time: t });
        }
        let a = params.acceleration(&s.as_slice()[..n], &s.as_slice()[n..], u.as_slice());
        traj.times.push(t);
        traj.accelerations.push(DVector::from_vec(a));
        traj.states.push(s.clone());
        s = rk4_step(|y| chain_derivative(params, y, u.as_slice()), &s, dt);
        traj.inputs.push(u);
    }
    Ok(traj)
}

/// Measurement noise as a fraction of each channel's RMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rms_ratio: f64,
    pub seed: u64,
}

/// Root-mean-square of every channel over the full record.
pub fn channel_rms(signals: &[DVector<f64>]) -> Vec<f64> {
    let m = signals.first().map_or(0, |s| s.len());
    let count = signals.len().max(1) as f64;
    (0..m)
        .map(|j| (signals.iter().map(|s| s[j] * s[j]).sum::<f64>() / count).sqrt())
        .collect()
}

/// Adds independent Gaussian noise with std `rms_ratio × RMS` to each
/// channel. A channel with zero RMS stays noise-free.
pub fn synthesize_measurements(
    traj: &Trajectory,
    layout: ObservationLayout,
    noise: &NoiseSpec,
) -> Result<Vec<DVector<f64>>> {
    if !(noise.rms_ratio >= 0.0 && noise.rms_ratio.is_finite()) {
        return Err(Error::Config("rms_ratio must be non-negative".into()));
    }
    let mut clean = traj.clean_measurements(layout);
    let std: Vec<f64> = channel_rms(&clean)
        .into_iter()
        .map(|rms| noise.rms_ratio * rms)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for y in &mut clean {
        for (value, sigma) in y.iter_mut().zip(&std) {
            let draw: f64 = rng.sample(StandardNormal);
            *value += sigma * draw;
        }
    }
    Ok(clean)
}
