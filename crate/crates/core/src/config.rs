//! TOML scenario files. Every field has a default, and the defaults are the
//! twelve-agent reference scenario, so an empty file is a valid config.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentParams, Gains, ResetRule};
use crate::certificate::SearchSettings;
use crate::disturbance::DisturbanceModel;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::seeds::{self, Purpose};
use crate::simulator::{InitialState, SimConfig};

/// A per-agent quantity: one value for everyone, an explicit list, a
/// uniform draw, or (for the estimator and sample states) a copy of another
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Scalar(f64),
    List(Vec<f64>),
    Uniform { uniform: [f64; 2] },
    Copy(String),
}

impl ValueSpec {
    fn resolve(&self, field: &str, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        match self {
            ValueSpec::Scalar(v) => Ok(vec![*v; n]),
            ValueSpec::List(v) if v.len() == n => Ok(v.clone()),
            ValueSpec::List(v) => Err(Error::param(field, format!("expected {n} values, got {}", v.len()))),
            ValueSpec::Uniform { uniform: [lo, hi] } => {
                if !(lo <= hi) {
                    return Err(Error::param(field, "uniform range needs lo <= hi"));
                }
                Ok((0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
            }
            ValueSpec::Copy(s) => Err(Error::param(field, format!("`{s}` is not valid here"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Random,
    Ring,
    Path,
    Complete,
    Edges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    pub n: usize,
    /// Edge probability for `random`.
    pub p: f64,
    /// Graph seed for `random`, independent of the run seed.
    pub seed: u64,
    /// 1-based edge list for `edges`.
    pub edges: Vec<[usize; 2]>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { kind: GraphKind::Random, n: 12, p: 0.3, seed: 7, edges: Vec::new() }
    }
}

impl GraphConfig {
    pub fn spec(&self) -> Result<GraphSpec> {
        let n = self.n;
        Ok(match self.kind {
            GraphKind::Random => GraphSpec::RandomConnected { n, p: self.p, seed: self.seed },
            GraphKind::Ring => GraphSpec::Ring { n },
            GraphKind::Path => GraphSpec::Path { n },
            GraphKind::Complete => GraphSpec::Complete { n },
            GraphKind::Edges => {
                let edges = self
                    .edges
                    .iter()
                    .map(|&[a, b]| {
                        if a == 0 || b == 0 {
                            Err(Error::param("graph.edges", "agents are numbered from 1"))
                        } else {
                            Ok((a - 1, b - 1))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                GraphSpec::Edges { n, edges }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub k_u: f64,
    pub k_a: f64,
    pub k_theta: f64,
    pub a_star: f64,
    pub delta: ValueSpec,
    pub timer_rate: ValueSpec,
    pub t1: ValueSpec,
    pub t2: ValueSpec,
    pub drift: ValueSpec,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            k_u: 0.72,
            k_a: 4.2,
            k_theta: 3.0,
            a_star: 1.0,
            delta: ValueSpec::Scalar(2e-5),
            timer_rate: ValueSpec::Scalar(1.0),
            t1: ValueSpec::Scalar(0.05),
            t2: ValueSpec::Scalar(0.1),
            drift: ValueSpec::Uniform { uniform: [1.0 - 1e-4, 1.0 + 1e-4] },
        }
    }
}

/// Initial values. `tau = "window"` draws uniformly in each `[T1_p, T2_p]`;
/// `vartheta_hat = "vartheta"`, `theta_hat = "theta"` and `a_hat = "a_star"`
/// copy the named quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub theta: ValueSpec,
    pub vartheta: ValueSpec,
    pub vartheta_hat: ValueSpec,
    pub a_hat: ValueSpec,
    pub theta_hat: ValueSpec,
    pub tau: ValueSpec,
}

impl Default for InitialConfig {
    fn default() -> Self {
        let clocks = ValueSpec::Uniform { uniform: [0.0, 5.0] };
        Self {
            theta: clocks.clone(),
            vartheta: clocks,
            vartheta_hat: ValueSpec::Copy("vartheta".into()),
            a_hat: ValueSpec::Copy("a_star".into()),
            theta_hat: ValueSpec::Copy("theta".into()),
            tau: ValueSpec::Copy("window".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Zero,
    Constant,
    Sinusoid,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub model: DisturbanceKind,
    /// Redraw period of `piecewise`.
    pub hold: f64,
    /// Per-agent levels in `[-1, 1]` for `constant`.
    pub levels: ValueSpec,
    /// Amplitude as a fraction of `δ_p` for `sinusoid`.
    pub fraction: f64,
    pub frequency: f64,
    pub independent_channels: bool,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            model: DisturbanceKind::Piecewise,
            hold: 1e-3,
            levels: ValueSpec::Scalar(1.0),
            fraction: 1.0,
            frequency: 1.0,
            independent_channels: false,
        }
    }
}

/// `reset = "uniform"` or a fixed restart value in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResetConfig {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub h: f64,
    pub event_tol: f64,
    pub reset: ResetConfig,
    pub log_stride: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_end: 120.5,
            h: 1e-3,
            event_tol: 1e-9,
            reset: ResetConfig::Named("uniform".into()),
            log_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateConfig {
    pub sigma: f64,
    pub budget: usize,
    pub grid_size: usize,
    pub search_seed: u64,
    pub tune_sigma: bool,
    pub epsilon: f64,
    pub kappa_fraction: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            sigma: 35.0,
            budget: 400,
            grid_size: 1000,
            search_seed: 0,
            tune_sigma: true,
            epsilon: 0.5,
            kappa_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Spacing of exported samples in seconds (0 exports every record).
    pub sample_interval: f64,
    /// Window exported at full resolution for the timer figure.
    pub timer_window: [f64; 2],
    pub nu: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { sample_interval: 0.05, timer_window: [120.0, 120.5], nu: 0.06 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub graph: GraphConfig,
    pub agents: AgentsConfig,
    pub initial: InitialConfig,
    pub disturbance: DisturbanceConfig,
    pub simulation: SimulationConfig,
    pub certificate: CertificateConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::param("config", e.to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::param(field, e.into_inner().message())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn check(&self) -> Result<()> {
        let c = &self.certificate;
        if !(c.epsilon > 0.0 && c.epsilon < 1.0) {
            return Err(Error::param("certificate.epsilon", "must lie in (0, 1)"));
        }
        if !(c.kappa_fraction > 0.0 && c.kappa_fraction < 1.0) {
            return Err(Error::param("certificate.kappa_fraction", "must lie in (0, 1)"));
        }
        if c.budget == 0 {
            return Err(Error::param("certificate.budget", "must be positive"));
        }
        if !(self.output.nu > 0.0) {
            return Err(Error::param("output.nu", "must be positive"));
        }
        if !(self.output.sample_interval >= 0.0) {
            return Err(Error::param("output.sample_interval", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn search_settings(&self) -> SearchSettings {
        let c = &self.certificate;
        SearchSettings {
            sigma: c.sigma,
            budget: c.budget,
            seed: c.search_seed,
            grid_size: c.grid_size,
            tune_sigma: c.tune_sigma,
        }
    }

    pub fn gains(&self) -> Gains {
        Gains { k_u: self.agents.k_u, k_a: self.agents.k_a, k_theta: self.agents.k_theta }
    }

    /// Per-agent parameters; the drift draw depends on `seed`.
    pub fn agent_params(&self, seed: u64) -> Result<Vec<AgentParams>> {
        let n = self.graph.n;
        let a = &self.agents;
        let mut fixed = seeds::stream(seed, Purpose::Drift, 1);
        let delta = a.delta.resolve("agents.delta", n, &mut fixed)?;
        let rate = a.timer_rate.resolve("agents.timer_rate", n, &mut fixed)?;
        let t1 = a.t1.resolve("agents.t1", n, &mut fixed)?;
        let t2 = a.t2.resolve("agents.t2", n, &mut fixed)?;
        let drift = a.drift.resolve("agents.drift", n, &mut seeds::stream(seed, Purpose::Drift, 0))?;
        let params: Vec<AgentParams> = (0..n)
            .map(|p| AgentParams {
                drift: drift[p],
                delta: delta[p],
                timer_rate: rate[p],
                t1: t1[p],
                t2: t2[p],
                gains: self.gains(),
                a_star: a.a_star,
            })
            .collect();
        for p in &params {
            p.validate()?;
        }
        Ok(params)
    }

    /// Resolved simulation input for run seed `seed`.
    pub fn resolve(&self, seed: u64) -> Result<SimConfig> {
        let n = self.graph.n;
        if n < 2 {
            return Err(Error::param("graph.n", "need at least two agents"));
        }
        let agents = self.agent_params(seed)?;
        let ic = &self.initial;
        let stream = |k: u64| seeds::stream(seed, Purpose::Initial, k);
        let theta = ic.theta.resolve("initial.theta", n, &mut stream(0))?;
        let vartheta = ic.vartheta.resolve("initial.vartheta", n, &mut stream(1))?;
        let copy = |spec: &ValueSpec, field: &str, name: &str, src: &[f64], k: u64| -> Result<Vec<f64>> {
            match spec {
                ValueSpec::Copy(s) if s == name => Ok(src.to_vec()),
                other => other.resolve(field, n, &mut stream(k)),
            }
        };
        let vartheta_hat = copy(&ic.vartheta_hat, "initial.vartheta_hat", "vartheta", &vartheta, 2)?;
        let theta_hat = copy(&ic.theta_hat, "initial.theta_hat", "theta", &theta, 3)?;
        let a_star = vec![self.agents.a_star; n];
        let a_hat = copy(&ic.a_hat, "initial.a_hat", "a_star", &a_star, 4)?;
        let tau = match &ic.tau {
            ValueSpec::Copy(s) if s == "window" => {
                let mut rng = stream(5);
                agents.iter().map(|a| a.t1 + (a.t2 - a.t1) * rng.random::<f64>()).collect()
            }
            other => other.resolve("initial.tau", n, &mut stream(5))?,
        };

        let d = &self.disturbance;
        let disturbance = match d.model {
            DisturbanceKind::Zero => DisturbanceModel::Zero,
            DisturbanceKind::Constant => DisturbanceModel::Constant {
                levels: d.levels.resolve("disturbance.levels", n, &mut seeds::stream(seed, Purpose::Disturbance, 1))?,
            },
            DisturbanceKind::Sinusoid => DisturbanceModel::Sinusoid { fraction: d.fraction, frequency: d.frequency },
            DisturbanceKind::Piecewise => DisturbanceModel::PiecewiseRandom { hold: d.hold },
        };
        let s = &self.simulation;
        let reset = match &s.reset {
            ResetConfig::Fixed(v) => ResetRule::Fixed(*v),
            ResetConfig::Named(name) if name == "uniform" => ResetRule::Uniform,
            ResetConfig::Named(name) => {
                return Err(Error::param("simulation.reset", format!("expected \"uniform\" or a number, got `{name}`")))
            }
        };
        let cfg = SimConfig {
            graph: self.graph.spec()?,
            agents,
            initial: InitialState { theta, vartheta, vartheta_hat, a_hat, theta_hat, tau },
            disturbance,
            independent_channels: d.independent_channels,
            t_end: s.t_end,
            h: s.h,
            event_tol: s.event_tol,
            reset,
            seed,
            log_stride: s.log_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
