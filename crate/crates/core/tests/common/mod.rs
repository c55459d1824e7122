#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;

use chronosync::agent::{agent_flow, controller_input, AgentParams, AgentState, Gains};
use chronosync::graph::{build_graph, Graph, GraphSpec, SpectralData};

pub const GAINS: Gains = Gains { k_u: 0.72, k_a: 4.2, k_theta: 3.0 };

pub fn reference_params(drift: f64) -> AgentParams {
    AgentParams {
        drift,
        delta: 2e-5,
        timer_rate: 1.0,
        t1: 0.05,
        t2: 0.1,
        gains: GAINS,
        a_star: 1.0,
    }
}

pub fn random_graph(rng: &mut impl Rng, n_lo: usize, n_hi: usize) -> Graph {
    let n = rng.random_range(n_lo..=n_hi);
    let p = rng.random_range(0.1..0.9);
    build_graph(&GraphSpec::RandomConnected { n, p, seed: rng.random() }).unwrap()
}

/// Agents with random clocks and estimator states whose neighbor samples
/// match the neighbors' own broadcast values.
pub fn random_agents(rng: &mut impl Rng, g: &Graph) -> (Vec<AgentState>, Vec<AgentParams>) {
    let n = g.n_agents();
    let params: Vec<AgentParams> = (0..n).map(|_| reference_params(rng.random_range(0.9999..1.0001))).collect();
    let hat: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let states = (0..n)
        .map(|p| {
            let neighbors = g.neighbors(p).to_vec();
            let neighbor_samples: BTreeMap<usize, f64> = neighbors.iter().map(|&q| (q, hat[q])).collect();
            AgentState {
                index: p,
                theta: rng.random_range(-5.0..5.0),
                vartheta: rng.random_range(-5.0..5.0),
                vartheta_hat: hat[p],
                a_hat: rng.random_range(0.9..1.1),
                theta_hat: rng.random_range(-5.0..5.0),
                tau: rng.random_range(0.0..0.1),
                neighbors,
                neighbor_samples,
            }
        })
        .collect();
    (states, params)
}

/// `ż` assembled from each agent's own flow: `η̇ = Vᵀϑ̇`, `ϑ̃̇ = ϑ̇ − ϑ̂̇`,
/// `ã̇ = −â̇`, `θ̃̇ = θ̇ − θ̂̇`, plus the timer rates.
pub fn composed_rates(
    states: &[AgentState],
    params: &[AgentParams],
    sd: &SpectralData,
    d: &[f64],
) -> (DVector<f64>, DVector<f64>) {
    let n = states.len();
    let rates: Vec<_> = states
        .iter()
        .zip(params)
        .zip(d)
        .map(|((s, p), &dp)| agent_flow(s, p, controller_input(s, p).unwrap(), dp).unwrap())
        .collect();
    let vt_dot = DVector::from_iterator(n, rates.iter().map(|r| r.vartheta));
    let mut z = DVector::zeros(4 * n - 1);
    z.rows_mut(0, n - 1).copy_from(&sd.v.tr_mul(&vt_dot));
    for (p, r) in rates.iter().enumerate() {
        z[n - 1 + p] = r.vartheta - r.vartheta_hat;
        z[2 * n - 1 + p] = -r.a_hat;
        z[3 * n - 1 + p] = r.theta - r.theta_hat;
    }
    let tau = DVector::from_iterator(n, rates.iter().map(|r| r.tau));
    (z, tau)
}
