//! What one deployed agent runs: its clocks, broadcast timer, drift
//! estimator and consensus controller.
//!
//! Agent `p` keeps a hardware clock `θ_p` (rate `a_p + d_p`, `a_p` unknown),
//! a steerable software clock `ϑ_p` (rate `a_p + d_p + u_p`), a broadcast
//! timer `τ_p` decreasing at `b_p − d_p`, the broadcast sample `ϑ̂_p` that
//! flows at the desired drift `a*`, and an estimator `(â_p, θ̂_p)` of its own
//! drift and hardware time. The controller is
//!
//! ```text
//! u_p = a* − â_p + k_u · Σ_{q ∈ N_p} (ϑ̂_q − ϑ̂_p)
//! ```
//!
//! When `τ_p` reaches zero the agent sets `ϑ̂_p ← ϑ_p`, pushes that value to
//! every neighbor, and restarts its timer somewhere in `[T1_p, T2_p]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k_u: f64,
    pub k_a: f64,
    pub k_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    /// True hardware drift `a_p` (s/s); the controller never reads it.
    pub drift: f64,
    /// Disturbance bound `δ_p`.
    pub delta: f64,
    /// Nominal timer rate `b_p`.
    pub timer_rate: f64,
    pub t1: f64,
    pub t2: f64,
    pub gains: Gains,
    pub a_star: f64,
}

impl AgentParams {
    /// `k_u = 0` is accepted so that the decoupled ensemble can be simulated
    /// as a negative control; the estimator gains must be positive.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.drift,
            self.delta,
            self.timer_rate,
            self.t1,
            self.t2,
            self.gains.k_u,
            self.gains.k_a,
            self.gains.k_theta,
            self.a_star,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::param("agent", "parameters must be finite"));
        }
        if self.drift <= 0.0 {
            return Err(Error::param("drift", "must be positive"));
        }
        if !(0.0..self.drift).contains(&self.delta) {
            return Err(Error::param("delta", "must lie in [0, drift)"));
        }
        if self.timer_rate <= self.delta {
            return Err(Error::param("b", "timer rate must exceed delta"));
        }
        if !(self.t1 > 0.0 && self.t1 <= self.t2) {
            return Err(Error::param("t1/t2", "need 0 < T1 <= T2"));
        }
        if self.gains.k_u < 0.0 {
            return Err(Error::param("k_u", "must be non-negative"));
        }
        if self.gains.k_a <= 0.0 || self.gains.k_theta <= 0.0 {
            return Err(Error::param("k_a/k_theta", "must be positive"));
        }
        if self.a_star <= 0.0 {
            return Err(Error::param("a_star", "must be positive"));
        }
        Ok(())
    }

    /// Fastest and slowest timer rates, `b_p ± δ_p`.
    pub fn timer_rate_bounds(&self) -> (f64, f64) {
        (self.timer_rate - self.delta, self.timer_rate + self.delta)
    }

    /// Bounds on the time between two consecutive expiries of this timer.
    pub fn inter_event_bounds(&self) -> (f64, f64) {
        let (b_min, b_max) = self.timer_rate_bounds();
        (self.t1 / b_max, self.t2 / b_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub index: usize,
    pub theta: f64,
    pub vartheta: f64,
    pub vartheta_hat: f64,
    pub a_hat: f64,
    pub theta_hat: f64,
    pub tau: f64,
    /// Neighbor indices (sorted).
    pub neighbors: Vec<usize>,
    /// Latest `ϑ̂_q` per neighbor, advanced at `a*` between broadcasts.
    pub neighbor_samples: BTreeMap<usize, f64>,
}

impl AgentState {
    pub fn receive(&mut self, from: usize, value: f64) {
        self.neighbor_samples.insert(from, value);
    }

    /// The consensus part of the controller, `k_u · Σ (ϑ̂_q − ϑ̂_p)`.
    ///
    /// Every `ϑ̂` flows at the same rate, so this term is constant between
    /// broadcasts.
    pub fn consensus_term(&self, k_u: f64) -> Result<f64> {
        let mut sum = 0.0;
        for &q in &self.neighbors {
            let sample = self
                .neighbor_samples
                .get(&q)
                .ok_or(Error::MissingNeighborSample { agent: self.index, neighbor: q })?;
            sum += sample - self.vartheta_hat;
        }
        Ok(k_u * sum)
    }

    /// Advances `ϑ̂_p` and every stored neighbor sample by `a*·dt`.
    pub fn advance_samples(&mut self, a_star: f64, dt: f64) {
        let inc = a_star * dt;
        self.vartheta_hat += inc;
        for v in self.neighbor_samples.values_mut() {
            *v += inc;
        }
    }
}

pub fn controller_input(st: &AgentState, params: &AgentParams) -> Result<f64> {
    Ok(params.a_star - st.a_hat + st.consensus_term(params.gains.k_u)?)
}

/// Time derivatives of one agent's continuous states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRates {
    pub theta: f64,
    pub vartheta: f64,
    pub vartheta_hat: f64,
    pub a_hat: f64,
    pub theta_hat: f64,
    pub tau: f64,
}

/// Disturbance realization per clock channel. The shared variant drives the
/// hardware clock, the software clock and the timer with one scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDisturbance {
    pub hardware: f64,
    pub software: f64,
    pub timer: f64,
}

impl ChannelDisturbance {
    pub fn shared(d: f64) -> Self {
        Self { hardware: d, software: d, timer: d }
    }

    fn check(&self, agent: usize, bound: f64) -> Result<()> {
        for value in [self.hardware, self.software, self.timer] {
            if value.abs() > bound || !value.is_finite() {
                return Err(Error::DisturbanceOutOfBound { agent, value, bound });
            }
        }
        Ok(())
    }
}

pub fn agent_flow(st: &AgentState, params: &AgentParams, u: f64, d: f64) -> Result<AgentRates> {
    agent_flow_channels(st, params, u, ChannelDisturbance::shared(d))
}

pub fn agent_flow_channels(
    st: &AgentState,
    params: &AgentParams,
    u: f64,
    d: ChannelDisturbance,
) -> Result<AgentRates> {
    d.check(st.index, params.delta)?;
    let err = st.theta - st.theta_hat;
    Ok(AgentRates {
        theta: params.drift + d.hardware,
        vartheta: params.drift + d.software + u,
        vartheta_hat: params.a_star,
        a_hat: params.gains.k_a * err,
        theta_hat: st.a_hat + params.gains.k_theta * err,
        tau: -params.timer_rate + d.timer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetRule {
    /// Always restart at this value (periodic broadcasting when T1 = T2).
    Fixed(f64),
    /// Uniform on `[T1_p, T2_p]` from a per-agent seeded stream.
    Uniform,
}

/// Draws timer restart values according to a [`ResetRule`].
#[derive(Debug, Clone)]
pub struct ResetSampler {
    rule: ResetRule,
    streams: Vec<ChaCha8Rng>,
}

impl ResetSampler {
    pub fn new(rule: ResetRule, n_agents: usize, master_seed: u64) -> Self {
        let streams = (0..n_agents)
            .map(|p| seeds::stream(master_seed, Purpose::Reset, p as u64))
            .collect();
        Self { rule, streams }
    }

    pub fn rule(&self) -> ResetRule {
        self.rule
    }

    pub fn draw(&mut self, agent: usize, t1: f64, t2: f64) -> Result<f64> {
        match self.rule {
            ResetRule::Fixed(value) => {
                if value < t1 || value > t2 {
                    return Err(Error::param(
                        "reset",
                        format!("fixed reset {value} outside [{t1}, {t2}]"),
                    ));
                }
                Ok(value)
            }
            ResetRule::Uniform => {
                let rng = self
                    .streams
                    .get_mut(agent)
                    .ok_or(Error::DimensionMismatch { expected: agent + 1, got: 0 })?;
                let u: f64 = rng.random();
                Ok((t1 + (t2 - t1) * u).min(t2))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expiry {
    pub new_tau: f64,
    pub broadcast_value: f64,
}

/// Handles `τ_p = 0`: samples the software clock into `ϑ̂_p` and restarts
/// the timer. The caller delivers `broadcast_value` to the neighbors.
pub fn on_timer_expiry(
    st: &mut AgentState,
    params: &AgentParams,
    reset: &mut ResetSampler,
    tol: f64,
) -> Result<Expiry> {
    if st.tau > tol {
        return Err(Error::NotExpired { agent: st.index, tau: st.tau });
    }
    let new_tau = reset.draw(st.index, params.t1, params.t2)?;
    st.vartheta_hat = st.vartheta;
    st.tau = new_tau;
    Ok(Expiry { new_tau, broadcast_value: st.vartheta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> AgentParams {
        AgentParams {
            drift: 1.0,
            delta: 2e-5,
            timer_rate: 1.0,
            t1: 0.05,
            t2: 0.1,
            gains: Gains { k_u: 0.72, k_a: 4.2, k_theta: 3.0 },
            a_star: 1.0,
        }
    }

    fn state(index: usize, neighbors: &[(usize, f64)]) -> AgentState {
        AgentState {
            index,
            theta: 2.0,
            vartheta: 5.0,
            vartheta_hat: 5.0,
            a_hat: 1.0,
            theta_hat: 2.0,
            tau: 0.07,
            neighbors: neighbors.iter().map(|n| n.0).collect(),
            neighbor_samples: neighbors.iter().copied().collect(),
        }
    }

    #[test]
    fn controller_at_consensus_is_zero() {
        let st = state(0, &[(1, 5.0), (2, 5.0)]);
        assert_eq!(controller_input(&st, &params()).unwrap(), 0.0);
    }

    #[test]
    fn controller_two_agents() {
        let st = state(0, &[(1, 5.5)]);
        assert_abs_diff_eq!(controller_input(&st, &params()).unwrap(), 0.36, epsilon = 1e-15);
    }

    #[test]
    fn controller_decoupled_gain() {
        let mut p = params();
        p.gains.k_u = 0.0;
        let mut st = state(0, &[(1, 100.0)]);
        st.a_hat = 1.25;
        assert_eq!(controller_input(&st, &p).unwrap(), p.a_star - 1.25);
    }

    #[test]
    fn controller_missing_sample() {
        let mut st = state(0, &[(1, 5.5)]);
        st.neighbors.push(3);
        assert_eq!(
            controller_input(&st, &params()),
            Err(Error::MissingNeighborSample { agent: 0, neighbor: 3 })
        );
    }

    #[test]
    fn controller_shift_invariant() {
        let mut st = state(0, &[(1, 5.5), (2, 4.2)]);
        let u0 = controller_input(&st, &params()).unwrap();
        st.vartheta_hat += 1000.0;
        for v in st.neighbor_samples.values_mut() {
            *v += 1000.0;
        }
        assert_abs_diff_eq!(controller_input(&st, &params()).unwrap(), u0, epsilon = 1e-10);
    }

    #[test]
    fn flow_unperturbed_estimator_equilibrium() {
        let st = state(0, &[(1, 5.0)]);
        let r = agent_flow(&st, &params(), 0.0, 0.0).unwrap();
        assert_eq!(r.theta, 1.0);
        assert_eq!(r.a_hat, 0.0);
        assert_eq!(r.theta_hat, st.a_hat);
        assert_eq!(r.tau, -1.0);
        assert_eq!(r.vartheta_hat, 1.0);
    }

    #[test]
    fn flow_hand_sums() {
        let st = state(0, &[(1, 5.0)]);
        let r = agent_flow(&st, &params(), 0.36, 2e-5).unwrap();
        assert_abs_diff_eq!(r.vartheta, 1.0 + 2e-5 + 0.36, epsilon = 1e-15);
        let r = agent_flow(&st, &params(), 0.0, -2e-5).unwrap();
        assert_abs_diff_eq!(r.tau, -1.00002, epsilon = 1e-15);
    }

    #[test]
    fn flow_rejects_large_disturbance() {
        let st = state(0, &[]);
        assert!(matches!(
            agent_flow(&st, &params(), 0.0, 3e-5),
            Err(Error::DisturbanceOutOfBound { .. })
        ));
    }

    #[test]
    fn expiry_resets_sample_and_timer() {
        let mut p = params();
        p.t1 = 0.05;
        p.t2 = 0.05;
        let mut st = state(0, &[(1, 5.0)]);
        st.vartheta = 12.34;
        st.tau = 0.0;
        let mut sampler = ResetSampler::new(ResetRule::Fixed(0.05), 2, 1);
        let ex = on_timer_expiry(&mut st, &p, &mut sampler, 1e-9).unwrap();
        assert_eq!(ex.new_tau, 0.05);
        assert_eq!(ex.broadcast_value, 12.34);
        assert_eq!(st.vartheta_hat, 12.34);

        let mut nb = state(1, &[(0, 0.0)]);
        nb.receive(0, ex.broadcast_value);
        assert_eq!(nb.neighbor_samples[&0], 12.34);
    }

    #[test]
    fn expiry_requires_expired_timer() {
        let mut st = state(0, &[]);
        let mut sampler = ResetSampler::new(ResetRule::Uniform, 1, 1);
        assert!(matches!(
            on_timer_expiry(&mut st, &params(), &mut sampler, 1e-9),
            Err(Error::NotExpired { .. })
        ));
    }

    #[test]
    fn uniform_resets_reproducible_and_in_window() {
        let mut a = ResetSampler::new(ResetRule::Uniform, 3, 42);
        let mut b = ResetSampler::new(ResetRule::Uniform, 3, 42);
        for _ in 0..10_000 {
            let x = a.draw(1, 0.05, 0.1).unwrap();
            assert!((0.05..=0.1).contains(&x));
            assert_eq!(x, b.draw(1, 0.05, 0.1).unwrap());
        }
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.delta = 1.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.t1 = 0.2;
        assert!(p.validate().is_err());
        let mut p = params();
        p.timer_rate = 1e-5;
        assert!(p.validate().is_err());
        let (lo, hi) = params().inter_event_bounds();
        assert_abs_diff_eq!(lo, 0.05 / 1.00002, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.1 / 0.99998, epsilon = 1e-15);
    }
}
