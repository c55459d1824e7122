//! Bounded clock disturbances `d_p(t) ∈ [−δ_p, δ_p]`.

use std::f64::consts::TAU;

use rand::Rng;

use crate::agent::ChannelDisturbance;
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    Zero,
    /// `d_p = level_p · δ_p` with each level in `[−1, 1]`.
    Constant { levels: Vec<f64> },
    /// `amplitude_p · sin(2π·frequency·t + phase_p)`, `amplitude_p = fraction · δ_p`;
    /// phases are drawn per agent from the seed.
    Sinusoid { fraction: f64, frequency: f64 },
    /// Uniform on `[−δ_p, δ_p]`, redrawn every `hold` seconds.
    PiecewiseRandom { hold: f64 },
}

/// A realized disturbance signal for every agent and channel.
#[derive(Debug, Clone)]
pub struct Disturbance {
    model: DisturbanceModel,
    delta: Vec<f64>,
    key: u64,
    phases: Vec<[f64; 3]>,
    independent: bool,
}

impl Disturbance {
    /// `independent` gives the hardware clock, software clock and timer
    /// separate realizations; otherwise one scalar drives all three.
    pub fn new(model: DisturbanceModel, delta: &[f64], seed: u64, independent: bool) -> Result<Self> {
        let n = delta.len();
        if delta.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::param("delta", "must be finite and nonnegative"));
        }
        match &model {
            DisturbanceModel::Zero => {}
            DisturbanceModel::Constant { levels } => {
                if levels.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: levels.len() });
                }
                if levels.iter().any(|l| !(-1.0..=1.0).contains(l)) {
                    return Err(Error::param("disturbance.levels", "must lie in [-1, 1]"));
                }
            }
            DisturbanceModel::Sinusoid { fraction, frequency } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(Error::param("disturbance.fraction", "must lie in [0, 1]"));
                }
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    return Err(Error::param("disturbance.frequency", "must be finite and nonnegative"));
                }
            }
            DisturbanceModel::PiecewiseRandom { hold } => {
                if !(*hold > 0.0 && hold.is_finite()) {
                    return Err(Error::param("disturbance.hold", "must be positive"));
                }
            }
        }
        let phases = (0..n)
            .map(|p| {
                let mut rng = seeds::stream(seed, Purpose::Phase, p as u64);
                [rng.random::<f64>() * TAU, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU]
            })
            .collect();
        Ok(Self {
            model,
            delta: delta.to_vec(),
            key: seeds::derive_seed(seed, Purpose::Disturbance, 0),
            phases,
            independent,
        })
    }

    pub fn model(&self) -> &DisturbanceModel {
        &self.model
    }

    /// Length of the piecewise-constant windows, if the model has any.
    pub fn hold(&self) -> Option<f64> {
        match self.model {
            DisturbanceModel::PiecewiseRandom { hold } => Some(hold),
            _ => None,
        }
    }

    pub fn window_index(&self, t: f64) -> u64 {
        match self.hold() {
            Some(hold) => (t / hold).floor().max(0.0) as u64,
            None => 0,
        }
    }

    fn channel(&self, p: usize, channel: usize, t: f64, window: u64) -> f64 {
        let delta = self.delta[p];
        let value = match &self.model {
            DisturbanceModel::Zero => 0.0,
            DisturbanceModel::Constant { levels } => levels[p] * delta,
            DisturbanceModel::Sinusoid { fraction, frequency } => {
                fraction * delta * (TAU * frequency * t + self.phases[p][channel]).sin()
            }
            DisturbanceModel::PiecewiseRandom { .. } => {
                let counter = window
                    .wrapping_mul(self.delta.len() as u64 * 3)
                    .wrapping_add(p as u64 * 3 + channel as u64);
                delta * (2.0 * seeds::unit_from_counter(self.key, counter) - 1.0)
            }
        };
        value.clamp(-delta, delta)
    }

    /// Disturbance of agent `p` at time `t`; `window` is the piecewise
    /// window index and is ignored by the other models.
    pub fn sample(&self, p: usize, t: f64, window: u64) -> ChannelDisturbance {
        let shared = self.channel(p, 0, t, window);
        if self.independent {
            ChannelDisturbance {
                hardware: shared,
                software: self.channel(p, 1, t, window),
                timer: self.channel(p, 2, t, window),
            }
        } else {
            ChannelDisturbance::shared(shared)
        }
    }

    /// Scalar disturbance `d_p(t)` (the hardware channel).
    pub fn disturbance_sample(&self, p: usize, t: f64) -> f64 {
        self.channel(p, 0, t, self.window_index(t))
    }
}
